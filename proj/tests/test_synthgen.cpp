#include <gtest/gtest.h>

#include <cmath>

#include "regbn/synthgen.hpp"

using namespace regbn;

namespace {

SynthParams small(Experiment e, std::uint64_t seed, std::size_t n = 4000) {
  SynthParams p = SynthParams::for_experiment(e, seed);
  p.image_side = 8;
  p.bump_std = 1.5;
  p.n_per_group = n;
  p.test_per_group = 100;
  return p;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(SynthGen, ReferenceAccuracies) {
  EXPECT_DOUBLE_EQ(bayes_reference(SynthParams::for_experiment(Experiment::I)), 0.875);
  EXPECT_DOUBLE_EQ(bayes_reference(SynthParams::for_experiment(Experiment::II)), 0.75);
}

TEST(SynthGen, ThresholdOnLabelFactorReachesReference) {
  // Any threshold inside the overlap is Bayes-optimal for two equal-width uniforms.
  for (auto [e, thr] : {std::pair{Experiment::I, 4.5}, std::pair{Experiment::II, 5.5}}) {
    const SynthDataset ds = generate(small(e, 3, 5000));
    std::size_t ok = 0;
    for (std::size_t i = 0; i < ds.train.size(); ++i)
      ok += (ds.train.sigma_cls[i] > thr ? 1.0 : 0.0) == ds.train.labels[i];
    const double acc = static_cast<double>(ok) / static_cast<double>(ds.train.size());
    EXPECT_NEAR(acc, bayes_reference(ds.params), 0.02) << to_string(e);
  }
}

TEST(SynthGen, FactorsFollowGroupRanges) {
  const SynthDataset ds = generate(small(Experiment::II, 4));
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const Interval& r = ds.train.labels[i] == 0.0 ? ds.params.group1_range : ds.params.group2_range;
    EXPECT_GE(ds.train.sigma_cls[i], r.lo);
    EXPECT_LT(ds.train.sigma_cls[i], r.hi);
    EXPECT_GE(ds.train.sigma_c[i], r.lo);
    EXPECT_LT(ds.train.sigma_c[i], r.hi);
  }
}

TEST(SynthGen, FactorsIndependentWithinGroup) {
  for (Experiment e : {Experiment::I, Experiment::II}) {
    const SynthDataset ds = generate(small(e, 5, 5000));
    for (double label : {0.0, 1.0}) {
      std::vector<double> a, b;
      for (std::size_t i = 0; i < ds.train.size(); ++i)
        if (ds.train.labels[i] == label) {
          a.push_back(ds.train.sigma_cls[i]);
          b.push_back(ds.train.sigma_c[i]);
        }
      EXPECT_LE(std::abs(pearson(a, b)), 0.05);
    }
  }
}

TEST(SynthGen, MetadataLayout) {
  const SynthDataset ds = generate(small(Experiment::I, 6, 500));
  double coin_sum = 0.0;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const auto m = ds.train.metadata.row(i);
    EXPECT_EQ(m[0], ds.train.labels[i]);
    EXPECT_EQ(m[1], ds.train.sigma_c[i]);
    EXPECT_TRUE(m[2] == 0.0 || m[2] == 1.0);
    coin_sum += m[2];
    for (std::size_t k = 3; k < 15; ++k) {
      EXPECT_GE(m[k], 0.0);
      EXPECT_LT(m[k], 1.0);
    }
    EXPECT_EQ(m[15], 1.0);
  }
  EXPECT_NEAR(coin_sum / static_cast<double>(ds.train.size()), 0.5, 0.06);
}

TEST(SynthGen, BalancedSplits) {
  const SynthDataset ds = generate(small(Experiment::I, 7, 300));
  ASSERT_EQ(ds.train.size(), 600u);
  ASSERT_EQ(ds.test.size(), 200u);
  double ones = 0;
  for (double y : ds.train.labels) ones += y;
  EXPECT_EQ(ones, 300.0);
  ones = 0;
  for (double y : ds.test.labels) ones += y;
  EXPECT_EQ(ones, 100.0);
  // Shuffled: labels are not sorted.
  EXPECT_FALSE(std::is_sorted(ds.train.labels.begin(), ds.train.labels.end()));
}

TEST(SynthGen, ImageQuadrants) {
  SynthParams p = small(Experiment::I, 8);
  p.image_side = 16;
  p.bump_std = 2.0;
  p.noise_std = 0.0;
  const SynthSample s = make_sample(p, 1, 3);
  const auto tile = gaussian_tile(8, 2.0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const double t = tile[y * 8 + x];
      EXPECT_DOUBLE_EQ(s.image(y, x), s.sigma_cls * t);
      EXPECT_DOUBLE_EQ(s.image(y + 8, x + 8), s.sigma_cls * t);
      EXPECT_DOUBLE_EQ(s.image(y + 8, x), s.sigma_c * t);
      EXPECT_EQ(s.image(y, x + 8), 0.0);
    }
}

TEST(SynthGen, TileIsCentredUnitPeak) {
  const auto t = gaussian_tile(32, 5.0);
  double peak = 0;
  for (double v : t) peak = std::max(peak, v);
  EXPECT_NEAR(peak, std::exp(-0.5 / 50.0), 1e-12);  // centre lies between pixels
  EXPECT_DOUBLE_EQ(t[15 * 32 + 15], t[16 * 32 + 16]);
  EXPECT_DOUBLE_EQ(t[0], t[32 * 32 - 1]);
}

TEST(SynthGen, NoiseHasRequestedScale) {
  SynthParams p = small(Experiment::I, 9);
  p.image_side = 32;
  p.bump_std = 2.0;
  const SynthSample s = make_sample(p, 0, 0);
  // Top-right tile is pure noise.
  double sum = 0, sq = 0;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 16; x < 32; ++x) {
      sum += s.image(y, x);
      sq += s.image(y, x) * s.image(y, x);
    }
  const double n = 256.0;
  EXPECT_NEAR(std::sqrt(sq / n - (sum / n) * (sum / n)), 0.1, 0.015);
}

TEST(SynthGen, DeterministicAndSeedSensitive) {
  const SynthParams p = small(Experiment::II, 10, 200);
  const SynthDataset a = generate(p), b = generate(p);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  const SynthDataset c = generate(small(Experiment::II, 11, 200));
  EXPECT_NE(a.train.sigma_cls, c.train.sigma_cls);
}

TEST(SynthGen, MakeSampleMatchesDatasetRow) {
  const SynthParams p = small(Experiment::I, 12, 50);
  const SynthDataset ds = generate(p);
  for (int group = 0; group < 2; ++group)
    for (std::size_t k : {std::size_t{0}, std::size_t{17}, std::size_t{60}}) {
      const SynthSample s = make_sample(p, group, k);
      const SynthSplit& split = k < p.n_per_group ? ds.train : ds.test;
      bool found = false;
      for (std::size_t i = 0; i < split.size(); ++i) {
        if (split.sigma_cls[i] != s.sigma_cls) continue;
        found = true;
        EXPECT_EQ(split.sigma_c[i], s.sigma_c);
        EXPECT_EQ(split.labels[i], static_cast<double>(group));
        const auto row = split.images.row(i);
        EXPECT_TRUE(std::equal(row.begin(), row.end(), s.image.values().begin()));
        const auto meta = split.metadata.row(i);
        EXPECT_TRUE(std::equal(meta.begin(), meta.end(), s.metadata.begin()));
      }
      EXPECT_TRUE(found);
    }
}

TEST(SynthGen, SplitEncodingRoundTrip) {
  const SynthDataset ds = generate(small(Experiment::I, 13, 40));
  const std::string bytes = encode_split(ds.train);
  EXPECT_EQ(decode_split(bytes), ds.train);
  EXPECT_THROW(decode_split(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_split(bytes + "!"), FormatError);
}

TEST(SynthGen, ValidatesParameters) {
  SynthParams p;
  p.image_side = 7;
  EXPECT_THROW(p.validate(), Error);
  p = SynthParams{};
  p.group1_range = {3.0, 3.0};
  EXPECT_THROW(p.validate(), Error);
  p = SynthParams{};
  p.n_per_group = 0;
  EXPECT_THROW(generate(p), Error);
  p = SynthParams{};
  p.noise_std = -1.0;
  EXPECT_THROW(p.validate(), Error);
}
