// Training/eval data sources.
//
// The built-in synthetic generator produces a 10-class (configurable)
// oriented-grating classification task: each class is a grating at a fixed
// orientation and frequency, with per-sample random phase, amplitude, shift
// and pixel noise. Samples are a pure function of (seed, split, index), so
// nothing is stored and runs are exactly reproducible.
//
// Alternatively, a directory of binary PGM/PPM images arranged in one
// subdirectory per class can be loaded.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taper/tensor.hpp"

namespace taper {

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic" | "image_dir"
  // synthetic
  int classes = 10;
  Shape image_shape{1, 12, 12};  // [C,H,W]
  int64_t train_n = 8192;
  int64_t eval_n = 2048;
  uint64_t seed = 1;
  real noise = real(0.45);
  real frequency = real(2.5);  // grating cycles across the image
  // image_dir
  std::string train_dir;
  std::string eval_dir;
};

class Dataset {
 public:
  enum class Split : uint64_t { train = 0, eval = 1 };

  static Dataset make(const DatasetConfig& cfg);

  int64_t size(Split s) const { return s == Split::train ? train_n_ : eval_n_; }
  int classes() const { return classes_; }
  const Shape& image_shape() const { return image_shape_; }

  // Fills x[batch, C, H, W] and labels for the given sample indices.
  void batch(Split s, std::span<const int64_t> indices, Tensor* x,
             std::vector<int>* labels) const;

 private:
  void sample(Split s, int64_t index, real* out, int* label) const;

  DatasetConfig cfg_;
  int classes_ = 0;
  Shape image_shape_;
  int64_t train_n_ = 0, eval_n_ = 0;
  // image_dir storage
  std::vector<std::vector<real>> images_[2];
  std::vector<int> labels_[2];
};

// Minimal binary PGM (P5) / PPM (P6) reader; values scaled to [0,1].
Tensor read_pnm(const std::string& path);

}  // namespace taper
