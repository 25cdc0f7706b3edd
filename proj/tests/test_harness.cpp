#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "regbn/harness.hpp"

using namespace regbn;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny(Normalizer n, std::size_t runs = 2) {
  ExperimentSpec s;
  s.normalizer = n;
  s.runs = runs;
  s.base_seed = 17;
  s.train.epochs = 2;
  s.n_per_group = 60;
  s.test_per_group = 20;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("regbn_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Harness, ParsesNames) {
  EXPECT_EQ(parse_normalizer("regbn-fixed"), Normalizer::regbn_fixed);
  EXPECT_EQ(parse_normalizer("bn"), Normalizer::bn);
  EXPECT_FALSE(parse_normalizer("BN").has_value());
  EXPECT_EQ(parse_experiment("II"), Experiment::II);
  EXPECT_EQ(parse_experiment("1"), Experiment::I);
  EXPECT_FALSE(parse_experiment("III").has_value());
  for (Normalizer n : {Normalizer::none, Normalizer::bn, Normalizer::regbn, Normalizer::regbn_fixed})
    EXPECT_EQ(parse_normalizer(to_string(n)), n);
}

TEST(Harness, AggregateUsesCompletedRunsAndSampleStd) {
  std::vector<RunResult> runs(4);
  const double acc[] = {0.8, 0.9, 0.85, 0.1};
  for (std::size_t i = 0; i < 4; ++i) {
    runs[i].ok = i != 3;
    runs[i].accuracy = acc[i];
  }
  const Aggregate a = aggregate_runs(runs);
  EXPECT_EQ(a.completed, 3u);
  EXPECT_EQ(a.failed, 1u);
  EXPECT_NEAR(a.mean, 0.85, 1e-15);
  EXPECT_NEAR(a.stddev, 0.05, 1e-15);
  runs.resize(1);
  EXPECT_EQ(aggregate_runs(runs).stddev, 0.0);
  EXPECT_EQ(aggregate_runs({}).completed, 0u);
}

TEST(Harness, Quantiles) {
  const std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 0.5), 3.0);
  EXPECT_EQ(quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(box_stats({1, 2, 3, 4}).iqr(), 1.5);
  EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(Harness, PerEpochSlices) {
  const std::vector<double> t{1, 2, 3, 4, 5, 6, 7};
  const auto e = per_epoch(t, 3);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[1], (std::vector<double>{4, 5, 6}));
  EXPECT_TRUE(per_epoch(t, 0).empty());
}

TEST(Harness, WorkerCountFromEnvironment) {
  const std::string name(kWorkersEnv);
  unsetenv(name.c_str());
  EXPECT_EQ(worker_count(), 1u);
  setenv(name.c_str(), "4", 1);
  EXPECT_EQ(worker_count(), 4u);
  for (const char* bad : {"0", "-2", "abc", "3x", "1000"}) {
    setenv(name.c_str(), bad, 1);
    EXPECT_THROW(worker_count(), Error) << bad;
  }
  unsetenv(name.c_str());
}

TEST(Harness, ParallelForVisitsEachIndexOnce) {
  std::vector<std::atomic<int>> hits(37);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  parallel_for(0, 3, [&](std::size_t) { FAIL(); });
}

TEST(Harness, SpecValidation) {
  ExperimentSpec s = tiny(Normalizer::regbn);
  s.runs = 0;
  EXPECT_THROW(s.validate(), Error);
  s = tiny(Normalizer::regbn_fixed);
  s.fixed_lambda = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s = tiny(Normalizer::regbn);
  s.train.epochs = 0;
  EXPECT_THROW(s.validate(), Error);
  s.normalizer = Normalizer::none;
  EXPECT_NO_THROW(s.validate());
  s.train.batch_size = 1;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Harness, RunSeedsArePairedAcrossCells) {
  const ExperimentSpec a = tiny(Normalizer::none), b = tiny(Normalizer::regbn);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.run_seed(i), b.run_seed(i));
  EXPECT_NE(a.run_seed(0), a.run_seed(1));
}

TEST(Harness, UntrainedEvaluationRuns) {
  ExperimentSpec s = tiny(Normalizer::none, 1);
  s.train.epochs = 0;
  const CellReport c = run_matrix(s);
  ASSERT_TRUE(c.runs[0].ok) << c.runs[0].error;
  EXPECT_GE(c.runs[0].accuracy, 0.0);
  EXPECT_LE(c.runs[0].accuracy, 1.0);
  EXPECT_TRUE(c.runs[0].epoch_accuracy.empty());
}

TEST(Harness, RegBnRunRecordsTraces) {
  const CellReport c = run_matrix(tiny(Normalizer::regbn, 1));
  const RunResult& r = c.runs[0];
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.batches_per_epoch, 3u);  // 120 samples / 50, last batch of 20
  EXPECT_EQ(r.lambda_trace.size(), 6u);
  EXPECT_EQ(r.delta_w_trace.size(), 6u);
  EXPECT_EQ(r.epoch_accuracy.size(), 2u);
  EXPECT_EQ(r.accuracy, r.epoch_accuracy.back());
  EXPECT_TRUE(r.small_batch);
  for (double l : r.lambda_trace) EXPECT_GT(l, 0.0);
  EXPECT_EQ(lambda_boxes(c).size(), 2u);
}

TEST(Harness, FixedLambdaTraceIsConstant) {
  ExperimentSpec s = tiny(Normalizer::regbn_fixed, 1);
  s.fixed_lambda = 250.0;
  const CellReport c = run_matrix(s);
  ASSERT_TRUE(c.runs[0].ok);
  for (double l : c.runs[0].lambda_trace) EXPECT_EQ(l, 250.0);
}

TEST(Harness, ParallelMatchesSerial) {
  const ExperimentSpec s = tiny(Normalizer::bn, 3);
  const CellReport a = run_matrix(s, 1), b = run_matrix(s, 3);
  EXPECT_EQ(aggregate_json(a).dump(), aggregate_json(b).dump());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(to_json(a.runs[i]).dump(), to_json(b.runs[i]).dump());
}

TEST(Harness, WrittenCellIsReproducibleAndConsistent) {
  const ExperimentSpec s = tiny(Normalizer::regbn, 2);
  const fs::path d1 = scratch("a"), d2 = scratch("b");
  write_cell(d1, run_matrix(s));
  write_cell(d2, run_matrix(s));
  for (const char* f : {"run_000.json", "run_001.json", "aggregate.json"})
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  EXPECT_TRUE(fs::exists(d1 / "timing.json"));

  // The aggregate can be recomputed from the per-run files.
  const json agg = json::parse(slurp(d1 / "aggregate.json"));
  std::vector<RunResult> runs;
  for (const char* f : {"run_000.json", "run_001.json"}) {
    const json j = json::parse(slurp(d1 / f));
    RunResult r;
    r.ok = j.at("status") == "ok";
    r.accuracy = j.at("accuracy").get<double>();
    runs.push_back(r);
  }
  const Aggregate a = aggregate_runs(runs);
  EXPECT_EQ(agg.at("schema_version"), kResultSchemaVersion);
  EXPECT_EQ(agg.at("aggregate").at("completed").get<std::size_t>(), a.completed);
  EXPECT_DOUBLE_EQ(agg.at("aggregate").at("mean_accuracy").get<double>(), a.mean);
  EXPECT_DOUBLE_EQ(agg.at("aggregate").at("std_accuracy").get<double>(), a.stddev);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Harness, AblationShapes) {
  ExperimentSpec base = tiny(Normalizer::regbn, 1);
  base.train.epochs = 1;
  const LambdaAblation la = ablation_lambda(base, {1.0, 1000.0});
  ASSERT_EQ(la.fixed.size(), 2u);
  EXPECT_EQ(la.fixed[1].spec.fixed_lambda, 1000.0);
  EXPECT_EQ(la.adaptive.spec.normalizer, Normalizer::regbn);
  const json j = to_json(la);
  EXPECT_EQ(j.at("cells").size(), 3u);

  const BatchSizeAblation ba = ablation_batchsize(base, {10, 60});
  ASSERT_EQ(ba.cells.size(), 2u);
  const json jb = to_json(ba);
  EXPECT_TRUE(jb.at("cells")[0].at("below_recommended").get<bool>());
  EXPECT_FALSE(jb.at("cells")[1].at("below_recommended").get<bool>());
  EXPECT_THROW(ablation_batchsize(base, {1}), Error);
}
