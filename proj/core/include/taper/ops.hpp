// Tensor ops recorded on the tape. The set is exactly what the pruning
// experiments need: conv, dense, relu, maxpool, softmax cross-entropy, and
// channel concat/slice for splitting grouped convolutions.
#pragma once

#include <span>
#include <vector>

#include "taper/tape.hpp"

namespace taper {
namespace ops {

// x[N,C,H,W] (cross-correlation) w[K,C,kh,kw] b[K] -> [N,K,H',W'].
// Output extents must divide exactly: (H + 2*pad - kh) % stride == 0.
NodeId conv2d(Tape& t, NodeId x, NodeId w, NodeId b, int stride, int pad);

// x[N,F] w[out,F] b[out] -> [N,out]
NodeId dense(Tape& t, NodeId x, NodeId w, NodeId b);

NodeId relu(Tape& t, NodeId x);

// x[N,C,H,W] -> [N,C,Ho,Wo]; overlapping windows allowed (kernel != stride).
NodeId maxpool2d(Tape& t, NodeId x, int kernel, int stride);

// logits[N,M], labels[N] -> scalar mean cross-entropy.
NodeId softmax_cross_entropy(Tape& t, NodeId logits, std::span<const int> labels);

// Channel-dim concat/slice for [N,C,...] tensors.
NodeId concat_channels(Tape& t, const std::vector<NodeId>& xs);
NodeId slice_channels(Tape& t, NodeId x, int64_t begin, int64_t end);

// [N,C,H,W] -> [N, C*H*W]
NodeId flatten(Tape& t, NodeId x);

// Elementwise helpers (used by tests and small compositions).
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId x, real c);
NodeId sum(Tape& t, NodeId x);  // scalar

// Plain (tape-free) forward kernels shared with the eval path.
Tensor conv2d_value(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor dense_value(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor maxpool2d_value(const Tensor& x, int kernel, int stride, std::vector<int32_t>* argmax);
void conv2d_out_hw(int64_t H, int64_t W, int64_t kh, int64_t kw, int stride, int pad, int64_t* Ho,
                   int64_t* Wo);

}  // namespace ops
}  // namespace taper
