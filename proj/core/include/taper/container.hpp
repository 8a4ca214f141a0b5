// Versioned binary container of named tensors plus a JSON metadata blob.
//
// Layout: magic "TAPERBOX" | u32 format version | u64 header length |
// header (JSON, UTF-8) | raw payload. The header declares byte order, dtype
// and shape per tensor and the payload offsets; payload values are stored
// little-endian in declaration order. Used for weight files and run
// snapshots, round-trips across platforms.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "taper/tensor.hpp"

namespace taper {

struct Container {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string meta_json;  // free-form JSON object ("{}" if unused)

  void add(const std::string& name, Tensor t) { tensors.emplace_back(name, std::move(t)); }
  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  std::map<std::string, Tensor> as_map() const {
    std::map<std::string, Tensor> m;
    for (const auto& [n, t] : tensors) m.emplace(n, t);
    return m;
  }
};

void write_container(const std::string& path, const Container& box);
Container read_container(const std::string& path);

}  // namespace taper
