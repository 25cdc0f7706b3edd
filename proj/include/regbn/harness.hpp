#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "regbn/nn.hpp"
#include "regbn/regbn_layer.hpp"
#include "regbn/rng.hpp"
#include "regbn/synthgen.hpp"

namespace regbn {

using json = nlohmann::json;

inline constexpr int kResultSchemaVersion = 1;
inline constexpr std::string_view kWorkersEnv = "REGBN_WORKERS";

enum class Normalizer { none, bn, regbn, regbn_fixed };

inline std::string_view to_string(Normalizer n) {
  switch (n) {
    case Normalizer::none: return "none";
    case Normalizer::bn: return "bn";
    case Normalizer::regbn: return "regbn";
    case Normalizer::regbn_fixed: return "regbn-fixed";
  }
  return "?";
}

inline std::optional<Normalizer> parse_normalizer(std::string_view s) {
  if (s == "none") return Normalizer::none;
  if (s == "bn") return Normalizer::bn;
  if (s == "regbn") return Normalizer::regbn;
  if (s == "regbn-fixed") return Normalizer::regbn_fixed;
  return std::nullopt;
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  if (s == "I" || s == "1") return Experiment::I;
  if (s == "II" || s == "2") return Experiment::II;
  return std::nullopt;
}

/// Layer settings used for the synthetic benchmark: per-column standardization of both
/// modalities, with standardized features scaled by 0.3 before the unit-norm ridge fit.
inline RegBnConfig synthetic_regbn_config() {
  RegBnConfig c;
  c.standardize_inputs = true;
  c.feature_scale = 0.3;
  return c;
}

/// One cell of the run matrix.
struct ExperimentSpec {
  Experiment experiment = Experiment::I;
  Normalizer normalizer = Normalizer::regbn;
  double fixed_lambda = 100.0;  // regbn-fixed only
  std::size_t runs = 10;
  std::uint64_t base_seed = 1;
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = 5;
    t.schedule = LrSchedule::cosine;
    return t;
  }();
  RegBnConfig regbn = synthetic_regbn_config();
  std::size_t n_per_group = 5000;
  std::size_t test_per_group = 500;

  void validate() const {
    if (runs < 1) throw Error("ExperimentSpec: runs must be at least 1");
    if (normalizer == Normalizer::regbn_fixed && !(fixed_lambda > 0.0 && std::isfinite(fixed_lambda)))
      throw Error("ExperimentSpec: fixed lambda must be positive and finite");
    train.validate();
    if (train.epochs == 0 && slot() == NormSlot::regbn)
      throw Error("ExperimentSpec: regbn needs at least one training epoch before it can evaluate");
    layer_config().validate();
    data_params(0).validate();
  }

  SynthParams data_params(std::uint64_t seed) const {
    SynthParams p = SynthParams::for_experiment(experiment, seed);
    p.n_per_group = n_per_group;
    p.test_per_group = test_per_group;
    return p;
  }

  RegBnConfig layer_config() const {
    RegBnConfig c = regbn;
    if (normalizer == Normalizer::regbn_fixed) {
      c.lambda_mode = LambdaMode::fixed;
      c.fixed_lambda = fixed_lambda;
    } else {
      c.lambda_mode = LambdaMode::adaptive;
    }
    return c;
  }

  NormSlot slot() const {
    switch (normalizer) {
      case Normalizer::none: return NormSlot::none;
      case Normalizer::bn: return NormSlot::bn;
      default: return NormSlot::regbn;
    }
  }

  /// Seed of run `i`. Cells sharing a base seed see the same datasets run by run.
  std::uint64_t run_seed(std::size_t i) const { return derive_seed(base_seed, 0x72756e, i); }
};

struct RunResult {
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;    // final test accuracy
  double train_loss = 0.0;  // mean batch loss of the final epoch
  std::vector<double> epoch_accuracy;     // test accuracy after each epoch
  std::vector<double> epoch_loss;         // mean batch loss per epoch
  std::vector<double> batch_loss;         // epochs × batches
  std::vector<double> lambda_trace;       // epochs × batches, regbn slots only
  std::vector<double> delta_w_trace;      // epochs × batches, regbn slots only
  std::size_t batches_per_epoch = 0;
  bool small_batch = false;
  double wall_seconds = 0.0;  // kept out of the result JSON
};

struct Aggregate {
  std::size_t completed = 0;
  std::size_t failed = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for a single run
};

struct CellReport {
  ExperimentSpec spec;
  std::vector<RunResult> runs;
  Aggregate aggregate;
};

inline Aggregate aggregate_runs(const std::vector<RunResult>& runs) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& r : runs) {
    if (!r.ok) {
      ++a.failed;
      continue;
    }
    ++a.completed;
    sum += r.accuracy;
  }
  if (a.completed == 0) return a;
  a.mean = sum / static_cast<double>(a.completed);
  if (a.completed > 1) {
    double ss = 0.0;
    for (const auto& r : runs)
      if (r.ok) ss += (r.accuracy - a.mean) * (r.accuracy - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(a.completed - 1));
  }
  return a;
}

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double iqr() const noexcept { return q3 - q1; }
};

inline BoxStats box_stats(const std::vector<double>& v) {
  return {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

/// Splits a flat per-batch trace into per-epoch slices.
inline std::vector<std::vector<double>> per_epoch(const std::vector<double>& trace,
                                                  std::size_t batches_per_epoch) {
  std::vector<std::vector<double>> out;
  if (batches_per_epoch == 0) return out;
  for (std::size_t s = 0; s + batches_per_epoch <= trace.size(); s += batches_per_epoch)
    out.emplace_back(trace.begin() + static_cast<std::ptrdiff_t>(s),
                     trace.begin() + static_cast<std::ptrdiff_t>(s + batches_per_epoch));
  return out;
}

/// Trains and evaluates one seeded model on a freshly generated dataset.
inline RunResult run_single(const ExperimentSpec& spec, std::size_t run_id,
                            const SynthDataset* shared_data = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.run_id = run_id;
  r.seed = spec.run_seed(run_id);
  try {
    std::optional<SynthDataset> own;
    if (!shared_data) own = generate(spec.data_params(r.seed));
    const SynthDataset& ds = shared_data ? *shared_data : *own;

    MlpModel model = MlpModel::create(MlpShape{}, spec.slot(), r.seed);
    TrainConfig tc = spec.train;
    tc.rng_seed = r.seed;
    const RegBnConfig rc = spec.layer_config();
    RegBnState state(rc);
    const bool uses_regbn = spec.slot() == NormSlot::regbn;
    Optimizer opt(tc.optimizer, model.parameters());

    for (std::size_t ep = 0; ep < tc.epochs; ++ep) {
      const double lr = tc.lr_at(ep);
      EpochTrace tr = train_epoch(model, opt, ds.train, tc, ep, lr, uses_regbn ? &state : nullptr,
                                  uses_regbn ? &rc : nullptr);
      r.batches_per_epoch = tr.losses.size();
      double sum = 0.0;
      for (double l : tr.losses) sum += l;
      r.epoch_loss.push_back(tr.losses.empty() ? 0.0 : sum / static_cast<double>(tr.losses.size()));
      r.batch_loss.insert(r.batch_loss.end(), tr.losses.begin(), tr.losses.end());
      r.lambda_trace.insert(r.lambda_trace.end(), tr.lambdas.begin(), tr.lambdas.end());
      r.delta_w_trace.insert(r.delta_w_trace.end(), tr.delta_w.begin(), tr.delta_w.end());
      r.small_batch = r.small_batch || tr.small_batch;
      r.epoch_accuracy.push_back(
          evaluate(model, ds.test, uses_regbn ? &state : nullptr, uses_regbn ? &rc : nullptr).accuracy);
    }
    if (tc.epochs == 0) {
      r.accuracy = evaluate(model, ds.test).accuracy;
    } else {
      r.accuracy = r.epoch_accuracy.back();
      r.train_loss = r.epoch_loss.back();
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Worker count from REGBN_WORKERS (default 1). Throws on a malformed value.
inline std::size_t worker_count() {
  const char* raw = std::getenv(kWorkersEnv.data());
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 256)
    throw Error(std::string(kWorkersEnv) + " must be an integer in [1, 256], got '" + raw + "'");
  return static_cast<std::size_t>(v);
}

/// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written by index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

inline CellReport run_matrix(const ExperimentSpec& spec, std::size_t workers = 1) {
  spec.validate();
  CellReport rep;
  rep.spec = spec;
  rep.runs.resize(spec.runs);
  parallel_for(spec.runs, workers, [&](std::size_t i) { rep.runs[i] = run_single(spec, i); });
  rep.aggregate = aggregate_runs(rep.runs);
  return rep;
}

// ---- JSON ----

inline json to_json(const ExperimentSpec& s) {
  const RegBnConfig rc = s.layer_config();
  json j{{"experiment", std::string(to_string(s.experiment))},
         {"normalizer", std::string(to_string(s.normalizer))},
         {"runs", s.runs},
         {"base_seed", s.base_seed},
         {"epochs", s.train.epochs},
         {"batch_size", s.train.batch_size},
         {"learning_rate", s.train.learning_rate},
         {"lr_schedule", s.train.schedule == LrSchedule::cosine ? "cosine" : "exponential"},
         {"lr_decay", s.train.lr_decay},
         {"optimizer", s.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
         {"n_per_group", s.n_per_group},
         {"test_per_group", s.test_per_group},
         {"reference_accuracy", bayes_reference(s.data_params(0))}};
  if (s.slot() == NormSlot::regbn) {
    j["regbn"] = {{"lambda_mode", rc.lambda_mode == LambdaMode::fixed ? "fixed" : "adaptive"},
                  {"fixed_lambda", rc.fixed_lambda},
                  {"beta1", rc.beta1},
                  {"beta2", rc.beta2},
                  {"epsilon", rc.epsilon},
                  {"seeds", rc.seeds},
                  {"standardize_inputs", rc.standardize_inputs},
                  {"feature_scale", rc.feature_scale}};
  }
  return j;
}

inline json to_json(const RunResult& r) {
  json j{{"schema_version", kResultSchemaVersion},
         {"run_id", r.run_id},
         {"seed", r.seed},
         {"status", r.ok ? "ok" : "failed"}};
  if (!r.ok) j["error"] = r.error;
  j["accuracy"] = r.accuracy;
  j["train_loss"] = r.train_loss;
  j["batches_per_epoch"] = r.batches_per_epoch;
  j["small_batch"] = r.small_batch;
  j["epoch_accuracy"] = r.epoch_accuracy;
  j["epoch_loss"] = r.epoch_loss;
  j["batch_loss"] = r.batch_loss;
  j["lambda_trace"] = r.lambda_trace;
  j["delta_w_trace"] = r.delta_w_trace;
  return j;
}

inline json to_json(const Aggregate& a) {
  return {{"completed", a.completed}, {"failed", a.failed}, {"mean_accuracy", a.mean},
          {"std_accuracy", a.stddev}};
}

inline json aggregate_json(const CellReport& c) {
  json runs = json::array();
  for (const auto& r : c.runs)
    runs.push_back({{"run_id", r.run_id}, {"status", r.ok ? "ok" : "failed"}, {"accuracy", r.accuracy}});
  return {{"schema_version", kResultSchemaVersion},
          {"spec", to_json(c.spec)},
          {"aggregate", to_json(c.aggregate)},
          {"runs", runs}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + p.string());
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

/// Writes run_NNN.json per run, aggregate.json, and timing.json (wall times, which are
/// the only non-reproducible numbers and so live apart from the results).
inline void write_cell(const std::filesystem::path& dir, const CellReport& c) {
  json timing = json::array();
  for (const auto& r : c.runs) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu.json", r.run_id);
    write_json(dir / name, to_json(r));
    timing.push_back({{"run_id", r.run_id}, {"wall_seconds", r.wall_seconds}});
  }
  write_json(dir / "aggregate.json", aggregate_json(c));
  write_json(dir / "timing.json", timing);
}

// ---- ablations ----

struct LambdaAblation {
  std::vector<CellReport> fixed;  // one cell per fixed value
  CellReport adaptive;
};

inline const std::vector<double>& default_fixed_lambdas() {
  static const std::vector<double> v{1.0, 100.0, 1000.0};
  return v;
}

/// Fixed-λ grid against adaptive λ, on the experiment in `base` (Exp I by default).
inline LambdaAblation ablation_lambda(ExperimentSpec base, const std::vector<double>& fixed_values,
                                      std::size_t workers = 1) {
  LambdaAblation a;
  for (double lam : fixed_values) {
    ExperimentSpec s = base;
    s.normalizer = Normalizer::regbn_fixed;
    s.fixed_lambda = lam;
    a.fixed.push_back(run_matrix(s, workers));
  }
  base.normalizer = Normalizer::regbn;
  a.adaptive = run_matrix(base, workers);
  return a;
}

/// Mean test accuracy per epoch across completed runs.
inline std::vector<double> mean_epoch_accuracy(const CellReport& c) {
  std::vector<double> out;
  std::size_t n = 0;
  for (const auto& r : c.runs) {
    if (!r.ok) continue;
    if (out.empty()) out.assign(r.epoch_accuracy.size(), 0.0);
    for (std::size_t e = 0; e < out.size() && e < r.epoch_accuracy.size(); ++e) out[e] += r.epoch_accuracy[e];
    ++n;
  }
  for (double& v : out) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  return out;
}

/// λ̂ box statistics per epoch, pooled over completed runs.
inline std::vector<BoxStats> lambda_boxes(const CellReport& c) {
  std::vector<std::vector<double>> pooled;
  for (const auto& r : c.runs) {
    if (!r.ok) continue;
    const auto eps = per_epoch(r.lambda_trace, r.batches_per_epoch);
    if (pooled.size() < eps.size()) pooled.resize(eps.size());
    for (std::size_t e = 0; e < eps.size(); ++e) pooled[e].insert(pooled[e].end(), eps[e].begin(), eps[e].end());
  }
  std::vector<BoxStats> out;
  for (const auto& v : pooled)
    if (!v.empty()) out.push_back(box_stats(v));
  return out;
}

inline json box_json(const BoxStats& b) {
  return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}};
}

inline json cell_summary(const CellReport& c) {
  json j{{"normalizer", std::string(to_string(c.spec.normalizer))},
         {"aggregate", to_json(c.aggregate)},
         {"epoch_accuracy", mean_epoch_accuracy(c)}};
  if (c.spec.normalizer == Normalizer::regbn_fixed) j["fixed_lambda"] = c.spec.fixed_lambda;
  json boxes = json::array();
  for (const auto& b : lambda_boxes(c)) boxes.push_back(box_json(b));
  j["lambda_boxes"] = boxes;
  return j;
}

inline json to_json(const LambdaAblation& a) {
  json cells = json::array();
  for (const auto& c : a.fixed) cells.push_back(cell_summary(c));
  cells.push_back(cell_summary(a.adaptive));
  return {{"schema_version", kResultSchemaVersion},
          {"ablation", "lambda"},
          {"spec", to_json(a.adaptive.spec)},
          {"cells", cells}};
}

struct BatchSizeAblation {
  std::vector<CellReport> cells;  // one per batch size
};

inline const std::vector<std::size_t>& default_batch_sizes() {
  static const std::vector<std::size_t> v{10, 20, 30, 40, 50, 100};
  return v;
}

inline BatchSizeAblation ablation_batchsize(ExperimentSpec base, const std::vector<std::size_t>& sizes,
                                            std::size_t workers = 1) {
  BatchSizeAblation a;
  base.normalizer = Normalizer::regbn;
  for (std::size_t b : sizes) {
    if (b < 2) throw Error("ablation_batchsize: batch size must be at least 2, got " + std::to_string(b));
    ExperimentSpec s = base;
    s.train.batch_size = b;
    a.cells.push_back(run_matrix(s, workers));
  }
  return a;
}

inline json to_json(const BatchSizeAblation& a) {
  json cells = json::array();
  for (const auto& c : a.cells) {
    std::vector<double> acc;
    for (const auto& r : c.runs)
      if (r.ok) acc.push_back(r.accuracy);
    cells.push_back({{"batch_size", c.spec.train.batch_size},
                     {"below_recommended", c.spec.train.batch_size < kRecommendedMinBatch},
                     {"aggregate", to_json(c.aggregate)},
                     {"median_accuracy", acc.empty() ? 0.0 : quantile(acc, 0.5)},
                     {"accuracies", acc}});
  }
  return {{"schema_version", kResultSchemaVersion},
          {"ablation", "batch_size"},
          {"spec", a.cells.empty() ? json() : to_json(a.cells.front().spec)},
          {"cells", cells}};
}

}  // namespace regbn
