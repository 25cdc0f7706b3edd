#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regbn/binary_io.hpp"
#include "regbn/matrix.hpp"
#include "regbn/rng.hpp"

namespace regbn {

enum class Experiment { I, II };

inline std::string_view to_string(Experiment e) { return e == Experiment::I ? "I" : "II"; }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
};

inline constexpr std::size_t kMetadataCols = 16;

/// Confounded two-group image dataset. Group 1 (label 0) draws both the label factor and
/// the confounder from group1_range, group 2 (label 1) from group2_range.
struct SynthParams {
  Experiment experiment = Experiment::I;
  Interval group1_range{1.0, 5.0};
  Interval group2_range{4.0, 8.0};
  std::size_t image_side = 64;
  std::size_t n_per_group = 5000;    // training samples per group
  std::size_t test_per_group = 500;  // held-out samples per group
  double bump_std = 5.0;             // pixels
  double noise_std = 0.1;            // additive pixel noise (variance 0.01)
  std::uint64_t rng_seed = 0;

  static SynthParams for_experiment(Experiment e, std::uint64_t seed = 0) {
    SynthParams p;
    p.experiment = e;
    p.rng_seed = seed;
    if (e == Experiment::II) {
      p.group1_range = {1.0, 7.0};
      p.group2_range = {4.0, 10.0};
    }
    return p;
  }

  void validate() const {
    if (!(group1_range.width() > 0.0) || !(group2_range.width() > 0.0))
      throw Error("SynthParams: sampling ranges must be non-empty");
    if (image_side == 0 || image_side % 2 != 0)
      throw Error("SynthParams: image_side must be positive and even");
    if (n_per_group == 0) throw Error("SynthParams: n_per_group must be positive");
    if (!(bump_std > 0.0) || noise_std < 0.0) throw Error("SynthParams: bad bump/noise scale");
  }
};

struct SynthSample {
  Matrix image;                   // side × side
  std::vector<double> metadata;   // 16 entries
  int label = 0;
  double sigma_cls = 0.0;
  double sigma_c = 0.0;
};

/// One split stored flat: row i of `images` is the row-major image of sample i.
struct SynthSplit {
  Matrix images;    // N × side²
  Matrix metadata;  // N × 16
  std::vector<double> labels;
  std::vector<double> sigma_cls;
  std::vector<double> sigma_c;

  std::size_t size() const noexcept { return labels.size(); }
  friend bool operator==(const SynthSplit&, const SynthSplit&) = default;
};

struct SynthDataset {
  SynthParams params;
  SynthSplit train;
  SynthSplit test;
};

/// Unit-peak Gaussian bump centred in a half×half tile.
inline std::vector<double> gaussian_tile(std::size_t half, double std_px) {
  std::vector<double> t(half * half);
  const double c = (static_cast<double>(half) - 1.0) / 2.0;
  for (std::size_t y = 0; y < half; ++y)
    for (std::size_t x = 0; x < half; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      t[y * half + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * std_px * std_px));
    }
  return t;
}

/// Writes one image into `out` (side² values): top-left and bottom-right tiles scaled by
/// sigma_cls, bottom-left by sigma_c, top-right zero, plus pixel noise.
inline void render_image(std::span<double> out, std::size_t side, const std::vector<double>& tile,
                         double sigma_cls, double sigma_c, double noise_std, Rng& rng) {
  const std::size_t half = side / 2;
  for (std::size_t y = 0; y < side; ++y) {
    const bool bottom = y >= half;
    for (std::size_t x = 0; x < side; ++x) {
      const bool right = x >= half;
      double scale = 0.0;
      if (bottom == right) scale = sigma_cls;  // main diagonal
      else if (bottom) scale = sigma_c;        // bottom-left
      const double base = tile[(y % half) * half + (x % half)];
      double v = scale * base;
      if (noise_std > 0.0) v += noise_std * rng.normal();
      out[y * side + x] = v;
    }
  }
}

namespace detail {

inline void fill_sample(const SynthParams& p, const std::vector<double>& tile, int group,
                        std::size_t index, std::span<double> image, std::span<double> meta,
                        double& label, double& s_cls, double& s_c) {
  Rng rng(derive_seed(p.rng_seed, static_cast<std::uint64_t>(group), index));
  const Interval& r = group == 0 ? p.group1_range : p.group2_range;
  s_cls = rng.uniform(r.lo, r.hi);
  s_c = rng.uniform(r.lo, r.hi);
  label = static_cast<double>(group);
  meta[0] = label;
  meta[1] = s_c;
  meta[2] = rng.coin() ? 1.0 : 0.0;
  for (std::size_t k = 3; k < 15; ++k) meta[k] = rng.uniform();
  meta[15] = 1.0;
  render_image(image, p.image_side, tile, s_cls, s_c, p.noise_std, rng);
}

inline SynthSplit allocate_split(std::size_t n, std::size_t pixels) {
  SynthSplit s;
  s.images = Matrix(n, pixels);
  s.metadata = Matrix(n, kMetadataCols);
  s.labels.resize(n);
  s.sigma_cls.resize(n);
  s.sigma_c.resize(n);
  return s;
}

}  // namespace detail

/// Single sample (group 0 or 1, per-group index). Same values that generate() places in the
/// dataset for that (group, index).
inline SynthSample make_sample(const SynthParams& p, int group, std::size_t index) {
  p.validate();
  const auto tile = gaussian_tile(p.image_side / 2, p.bump_std);
  SynthSample s;
  s.image = Matrix(p.image_side, p.image_side);
  s.metadata.resize(kMetadataCols);
  double label = 0.0;
  detail::fill_sample(p, tile, group, index, s.image.values(), s.metadata, label, s.sigma_cls,
                      s.sigma_c);
  s.label = static_cast<int>(label);
  return s;
}

/// Generates n_per_group + test_per_group samples per group; the first n_per_group of each
/// group form the (shuffled) training split, the rest the test split. Every sample has its
/// own counter-derived RNG stream, so output depends only on the parameters.
inline SynthDataset generate(const SynthParams& p) {
  p.validate();
  const std::size_t pixels = p.image_side * p.image_side;
  const auto tile = gaussian_tile(p.image_side / 2, p.bump_std);
  const std::size_t per_group = p.n_per_group + p.test_per_group;

  SynthDataset ds;
  ds.params = p;
  ds.train = detail::allocate_split(2 * p.n_per_group, pixels);
  ds.test = detail::allocate_split(2 * p.test_per_group, pixels);

  auto order = [&](std::size_t n, std::uint64_t stream) {
    std::vector<std::size_t> o(n);
    std::iota(o.begin(), o.end(), 0);
    Rng rng(derive_seed(p.rng_seed, stream));
    rng.shuffle(o.begin(), o.end());
    return o;
  };
  const auto train_pos = order(ds.train.size(), 100);
  const auto test_pos = order(ds.test.size(), 101);

  for (int group = 0; group < 2; ++group) {
    for (std::size_t k = 0; k < per_group; ++k) {
      const bool is_train = k < p.n_per_group;
      SynthSplit& split = is_train ? ds.train : ds.test;
      const std::size_t slot = is_train ? static_cast<std::size_t>(group) * p.n_per_group + k
                                        : static_cast<std::size_t>(group) * p.test_per_group +
                                              (k - p.n_per_group);
      const std::size_t row = is_train ? train_pos[slot] : test_pos[slot];
      detail::fill_sample(p, tile, group, k, split.images.row(row), split.metadata.row(row),
                          split.labels[row], split.sigma_cls[row], split.sigma_c[row]);
    }
  }
  return ds;
}

/// Best accuracy achievable from the label factor alone with equal class priors:
/// 1 - ½ ∫ min(p1, p2) for the two uniform densities.
inline double bayes_reference(const SynthParams& p) {
  const Interval& a = p.group1_range;
  const Interval& b = p.group2_range;
  const double overlap = std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
  const double min_density = std::min(1.0 / a.width(), 1.0 / b.width());
  return 1.0 - 0.5 * overlap * min_density;
}

inline constexpr std::string_view kSplitMagic = "RGDS";
inline constexpr std::uint16_t kSplitVersion = 1;

/// Binary split file: magic "RGDS", u16 version, images, metadata (matrices), then labels,
/// sigma_cls, sigma_c arrays.
inline std::string encode_split(const SynthSplit& s) {
  BinaryWriter w(kSplitMagic, kSplitVersion);
  w.matrix(s.images);
  w.matrix(s.metadata);
  w.f64s(s.labels);
  w.f64s(s.sigma_cls);
  w.f64s(s.sigma_c);
  return w.take();
}

inline SynthSplit decode_split(std::string_view bytes) {
  BinaryReader r(bytes, kSplitMagic);
  if (r.version() != kSplitVersion) throw FormatError("decode_split: unsupported version");
  SynthSplit s;
  s.images = r.matrix();
  s.metadata = r.matrix();
  s.labels = r.f64s();
  s.sigma_cls = r.f64s();
  s.sigma_c = r.f64s();
  r.expect_end();
  const std::size_t n = s.labels.size();
  if (s.images.rows() != n || s.metadata.rows() != n || s.sigma_cls.size() != n ||
      s.sigma_c.size() != n)
    throw FormatError("decode_split: inconsistent row counts");
  return s;
}

}  // namespace regbn
