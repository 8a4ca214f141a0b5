// Extraction of the pruned dense sub-network: keep the channels with rho > 0,
// slice every weight tensor along the gated dims on both the producer and the
// consumer side, and emit a gate-free GraphSpec plus its weights.
#pragma once

#include "taper/container.hpp"
#include "taper/graph.hpp"

namespace taper {

struct PrunedConfiguration {
  std::vector<std::vector<char>> keep;  // per site: channel -> kept (rho > 0)
  GraphSpec spec;                       // pruned dense topology (no sites)
  Container weights;                    // sliced tensors, named for `spec`
  int64_t mac_count = 0;                // conv/FC multiplies of the pruned net
};

// Fails if a site keeps zero channels, unless allow_dead_branches is set and
// the dead tensor only feeds concat inputs (the branch is then removed).
PrunedConfiguration extract(const InstrumentedGraph& g, bool allow_dead_branches = false);

// Integer conv/FC multiply count of an uninstrumented spec (oracle helper for
// cross-checks and the CLI cost report).
int64_t spec_mac_count(const GraphSpec& spec);

}  // namespace taper
