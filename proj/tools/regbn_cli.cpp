#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "regbn/regbn.hpp"
#include "regbn/verify.hpp"

namespace fs = std::filesystem;
using namespace regbn;

namespace {

struct CommonArgs {
  std::string experiment = "I";
  std::size_t runs = 10;
  std::uint64_t seed = 1;
  std::size_t epochs = 5;
  std::size_t batch_size = 50;
  double learning_rate = 1e-3;
  std::string schedule = "cosine";
  double lr_decay = 1.0;
  std::size_t n_per_group = 5000;
  std::size_t test_per_group = 500;
  std::string out;
};

enum class Flags { training, training_no_batch, data };

void add_common(CLI::App* cmd, CommonArgs& a, Flags flags) {
  cmd->add_option("--experiment", a.experiment, "Synthetic experiment: I or II")
      ->check(CLI::IsMember({"I", "II", "1", "2"}))
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "Base seed")->capture_default_str();
  cmd->add_option("--n-per-group", a.n_per_group, "Training samples per group")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))
      ->capture_default_str();
  cmd->add_option("--test-per-group", a.test_per_group, "Test samples per group")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))
      ->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory")->required();
  if (flags == Flags::data) return;
  cmd->add_option("--runs", a.runs, "Independent seeded runs per cell")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->capture_default_str();
  cmd->add_option("--epochs", a.epochs, "Training epochs per run")
      ->check(CLI::Range(std::size_t{0}, std::size_t{10000}))
      ->capture_default_str();
  if (flags == Flags::training)
    cmd->add_option("--batch-size", a.batch_size, "Mini-batch size (>= 2; below 50 warns)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))
        ->capture_default_str();
  cmd->add_option("--lr", a.learning_rate, "Adam learning rate")
      ->check(CLI::Range(1e-12, 10.0))
      ->capture_default_str();
  cmd->add_option("--lr-schedule", a.schedule, "Per-epoch learning rate: cosine | exponential")
      ->check(CLI::IsMember({"cosine", "exponential"}))
      ->capture_default_str();
  cmd->add_option("--lr-decay", a.lr_decay, "Per-epoch factor for the exponential schedule")
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
}

ExperimentSpec make_spec(const CommonArgs& a) {
  ExperimentSpec s;
  s.experiment = *parse_experiment(a.experiment);
  s.runs = a.runs;
  s.base_seed = a.seed;
  s.train.epochs = a.epochs;
  s.train.batch_size = a.batch_size;
  s.train.learning_rate = a.learning_rate;
  s.train.schedule = a.schedule == "cosine" ? LrSchedule::cosine : LrSchedule::exponential;
  s.train.lr_decay = a.lr_decay;
  s.n_per_group = a.n_per_group;
  s.test_per_group = a.test_per_group;
  return s;
}

void warn_small_batch(std::size_t b) {
  if (b < kRecommendedMinBatch)
    std::cerr << "warning: batch size " << b << " is below the recommended minimum of "
              << kRecommendedMinBatch << " for RegBN\n";
}

void print_cell(const CellReport& c) {
  std::printf("%-3s %-12s", std::string(to_string(c.spec.experiment)).c_str(),
              std::string(to_string(c.spec.normalizer)).c_str());
  if (c.spec.normalizer == Normalizer::regbn_fixed) std::printf(" lambda=%-8g", c.spec.fixed_lambda);
  std::printf(" b=%-4zu acc %.4f +- %.4f  (%zu ok, %zu failed)\n", c.spec.train.batch_size,
              c.aggregate.mean, c.aggregate.stddev, c.aggregate.completed, c.aggregate.failed);
}

int cmd_synth(const CommonArgs& a, const std::string& normalizer, double lambda) {
  ExperimentSpec s = make_spec(a);
  s.normalizer = *parse_normalizer(normalizer);
  s.fixed_lambda = lambda;
  if (s.slot() == NormSlot::regbn) warn_small_batch(s.train.batch_size);
  const CellReport c = run_matrix(s, worker_count());
  write_cell(a.out, c);
  print_cell(c);
  return c.aggregate.failed == 0 ? 0 : 2;
}

int cmd_ablate_lambda(const CommonArgs& a, const std::vector<double>& lambdas) {
  const ExperimentSpec s = make_spec(a);
  warn_small_batch(s.train.batch_size);
  const LambdaAblation ab = ablation_lambda(s, lambdas, worker_count());
  std::size_t failed = 0;
  const fs::path out(a.out);
  for (const auto& c : ab.fixed) {
    char name[64];
    std::snprintf(name, sizeof name, "fixed_%g", c.spec.fixed_lambda);
    write_cell(out / name, c);
    print_cell(c);
    failed += c.aggregate.failed;
  }
  write_cell(out / "adaptive", ab.adaptive);
  print_cell(ab.adaptive);
  failed += ab.adaptive.aggregate.failed;
  write_json(out / "ablation_lambda.json", to_json(ab));
  return failed == 0 ? 0 : 2;
}

int cmd_ablate_batchsize(const CommonArgs& a, const std::vector<std::size_t>& sizes) {
  for (std::size_t b : sizes) warn_small_batch(b);
  const BatchSizeAblation ab = ablation_batchsize(make_spec(a), sizes, worker_count());
  std::size_t failed = 0;
  for (const auto& c : ab.cells) {
    write_cell(fs::path(a.out) / ("batch_" + std::to_string(c.spec.train.batch_size)), c);
    print_cell(c);
    failed += c.aggregate.failed;
  }
  write_json(fs::path(a.out) / "ablation_batchsize.json", to_json(ab));
  return failed == 0 ? 0 : 2;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

int cmd_gen_data(const CommonArgs& a) {
  SynthParams p = SynthParams::for_experiment(*parse_experiment(a.experiment), a.seed);
  p.n_per_group = a.n_per_group;
  p.test_per_group = a.test_per_group;
  const SynthDataset ds = generate(p);
  const fs::path out(a.out);
  json files = json::object();
  for (const auto& [name, split] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    const std::string bytes = encode_split(*split);
    write_text(out / (std::string(name) + ".bin"), bytes);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    files[name] = {{"file", std::string(name) + ".bin"},
                   {"samples", split->size()},
                   {"bytes", bytes.size()},
                   {"fnv1a64", hex}};
  }
  const json manifest{{"schema_version", kResultSchemaVersion},
                      {"experiment", std::string(to_string(p.experiment))},
                      {"seed", p.rng_seed},
                      {"image_side", p.image_side},
                      {"metadata_cols", kMetadataCols},
                      {"group1_range", {p.group1_range.lo, p.group1_range.hi}},
                      {"group2_range", {p.group2_range.lo, p.group2_range.hi}},
                      {"bump_std", p.bump_std},
                      {"noise_std", p.noise_std},
                      {"reference_accuracy", bayes_reference(p)},
                      {"splits", files}};
  write_json(out / "manifest.json", manifest);
  std::printf("wrote %zu train / %zu test samples to %s\n", ds.train.size(), ds.test.size(),
              out.string().c_str());
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  using namespace regbn::verify;
  const std::vector<CheckResult> results{closed_form_equivalence(200, seed), norm_attainment(100, seed),
                                         ridge_identity(100, seed),          lambda_gradient(100, seed),
                                         backprop(seed),                     ema_trivia(seed)};
  bool all = true;
  for (const auto& r : results) {
    std::printf("%s  %-50s worst %.3g (tol %.3g, %zu cases)%s%s\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.tolerance, r.cases, r.detail.empty() ? "" : "  ",
                r.detail.c_str());
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RegBN synthetic benchmark runner"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  std::string normalizer = "regbn";
  double lambda = 100.0;
  auto* synth = app.add_subcommand("synth", "Run one cell of the synthetic experiment");
  add_common(synth, synth_args, Flags::training);
  synth->add_option("--normalizer", normalizer, "none | bn | regbn | regbn-fixed")
      ->check(CLI::IsMember({"none", "bn", "regbn", "regbn-fixed"}))
      ->capture_default_str();
  synth->add_option("--lambda", lambda, "Fixed lambda for regbn-fixed (> 0)")
      ->check(CLI::Range(1e-12, 1e12))
      ->capture_default_str();

  CommonArgs lambda_args;
  std::vector<double> lambdas = default_fixed_lambdas();
  auto* ablate_lambda = app.add_subcommand("ablate-lambda", "Fixed lambda grid against adaptive lambda");
  add_common(ablate_lambda, lambda_args, Flags::training);
  ablate_lambda->add_option("--lambdas", lambdas, "Fixed lambda values (> 0)")
      ->check(CLI::Range(1e-12, 1e12))
      ->capture_default_str();

  CommonArgs batch_args;
  batch_args.runs = 5;
  std::vector<std::size_t> sizes = default_batch_sizes();
  auto* ablate_batch = app.add_subcommand("ablate-batchsize", "RegBN accuracy across batch sizes");
  add_common(ablate_batch, batch_args, Flags::training_no_batch);
  ablate_batch->add_option("--sizes", sizes, "Batch sizes (>= 2)")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))
      ->capture_default_str();

  CommonArgs data_args;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset and manifest");
  add_common(gen, data_args, Flags::data);

  std::uint64_t verify_seed = 1;
  auto* verify_cmd = app.add_subcommand("verify", "Run the oracle and property checks");
  verify_cmd->add_option("--seed", verify_seed, "Seed for the random instances")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_args, normalizer, lambda);
    if (*ablate_lambda) return cmd_ablate_lambda(lambda_args, lambdas);
    if (*ablate_batch) return cmd_ablate_batchsize(batch_args, sizes);
    if (*gen) return cmd_gen_data(data_args);
    if (*verify_cmd) return cmd_verify(verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
