#include "taper/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "taper/rng.hpp"

namespace taper {

namespace fs = std::filesystem;

Dataset Dataset::make(const DatasetConfig& cfg) {
  Dataset d;
  d.cfg_ = cfg;
  if (cfg.kind == "synthetic") {
    if (cfg.classes < 2) fail("synthetic dataset needs >= 2 classes");
    if (cfg.image_shape.size() != 3) fail("synthetic image shape must be [C,H,W]");
    d.classes_ = cfg.classes;
    d.image_shape_ = cfg.image_shape;
    d.train_n_ = cfg.train_n;
    d.eval_n_ = cfg.eval_n;
    return d;
  }
  if (cfg.kind != "image_dir") fail("unknown dataset kind '%s'", cfg.kind.c_str());

  auto load_split = [&](const std::string& dir, int split) {
    if (dir.empty()) fail("image_dir dataset: missing %s directory",
                          split == 0 ? "train" : "eval");
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) class_dirs.push_back(e.path().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) fail("image_dir dataset: no class subdirectories under '%s'",
                                 dir.c_str());
    if (d.classes_ == 0) d.classes_ = static_cast<int>(class_dirs.size());
    int label = 0;
    for (const auto& cd : class_dirs) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(cd))
        if (e.is_regular_file()) files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        Tensor img = read_pnm(f);
        if (d.image_shape_.empty()) d.image_shape_ = img.shape();
        if (img.shape() != d.image_shape_)
          fail("image '%s' has shape %s, expected %s", f.c_str(),
               shape_str(img.shape()).c_str(), shape_str(d.image_shape_).c_str());
        d.images_[split].emplace_back(img.data(), img.data() + img.numel());
        d.labels_[split].push_back(label);
      }
      ++label;
    }
  };
  load_split(cfg.train_dir, 0);
  load_split(cfg.eval_dir, 1);
  d.train_n_ = static_cast<int64_t>(d.images_[0].size());
  d.eval_n_ = static_cast<int64_t>(d.images_[1].size());
  if (d.train_n_ == 0 || d.eval_n_ == 0) fail("image_dir dataset: empty split");
  return d;
}

void Dataset::sample(Split s, int64_t index, real* out, int* label) const {
  if (cfg_.kind == "image_dir") {
    const int split = s == Split::train ? 0 : 1;
    const auto& img = images_[split][static_cast<size_t>(index)];
    std::copy(img.begin(), img.end(), out);
    *label = labels_[split][static_cast<size_t>(index)];
    return;
  }

  const int64_t C = image_shape_[0], H = image_shape_[1], W = image_shape_[2];
  const int cls = static_cast<int>(index % classes_);
  *label = cls;

  const uint64_t sid = (static_cast<uint64_t>(s) << 56) | static_cast<uint64_t>(index);
  const double phase =
      6.283185307179586 * rng_uniform(cfg_.seed, RngStream::dataset, sid, 0);
  const double amp = 0.7 + 0.6 * rng_uniform(cfg_.seed, RngStream::dataset, sid, 1);
  const double dx = 2.0 * rng_uniform(cfg_.seed, RngStream::dataset, sid, 2) - 1.0;
  const double dy = 2.0 * rng_uniform(cfg_.seed, RngStream::dataset, sid, 3) - 1.0;

  const double theta = 3.141592653589793 * cls / classes_;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double k = 6.283185307179586 * cfg_.frequency / static_cast<double>(W);

  for (int64_t c = 0; c < C; ++c) {
    // Higher channels carry the same grating at reduced contrast.
    const double cscale = 1.0 / (1.0 + static_cast<double>(c));
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const double xx = static_cast<double>(x) - W / 2.0 + dx;
        const double yy = static_cast<double>(y) - H / 2.0 + dy;
        const double v = amp * cscale * std::cos(k * (xx * ct + yy * st) + phase);
        const double noise =
            cfg_.noise * rng_normal(cfg_.seed, RngStream::dataset, sid,
                                    static_cast<uint64_t>(100 + (c * H + y) * W + x));
        out[(c * H + y) * W + x] = static_cast<real>(v + noise);
      }
  }
}

void Dataset::batch(Split s, std::span<const int64_t> indices, Tensor* x,
                    std::vector<int>* labels) const {
  const int64_t N = static_cast<int64_t>(indices.size());
  Shape sh{N};
  for (int64_t d : image_shape_) sh.push_back(d);
  *x = Tensor(sh);
  labels->resize(static_cast<size_t>(N));
  const int64_t stride = x->numel() / N;
  for (int64_t i = 0; i < N; ++i) {
    if (indices[static_cast<size_t>(i)] < 0 || indices[static_cast<size_t>(i)] >= size(s))
      fail("dataset index %lld out of range [0,%lld)",
           (long long)indices[static_cast<size_t>(i)], (long long)size(s));
    sample(s, indices[static_cast<size_t>(i)], x->data() + i * stride,
           &(*labels)[static_cast<size_t>(i)]);
  }
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open image '%s'", path.c_str());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") fail("'%s': only binary PGM (P5) / PPM (P6) supported",
                                           path.c_str());
  auto next_int = [&]() {
    int v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v)) fail("'%s': malformed PNM header", path.c_str());
      return v;
    }
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval <= 0 || maxval > 255) fail("'%s': unsupported maxval %d", path.c_str(), maxval);
  in.get();  // single whitespace after maxval
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) fail("'%s': truncated pixel data", path.c_str());
  Tensor t({channels, h, w});
  // interleaved -> planar
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t[(static_cast<int64_t>(c) * h + y) * w + x] =
            static_cast<real>(raw[(static_cast<size_t>(y) * w + x) * channels +
                                  static_cast<size_t>(c)]) /
            static_cast<real>(maxval);
  return t;
}

}  // namespace taper
