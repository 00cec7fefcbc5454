#pragma once

#include "sgo/optim.hpp"
#include "sgo/problems.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sgo {

// Raised for malformed configuration input (unknown keys, bad types, missing
// fields, mismatched comparisons). Commands translate it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ProblemSpec {
  std::string kind;  // quadratic | lowrank-regression | logistic | mlp
  std::uint64_t seed = 0;
  // quadratic
  Index m = 0, n = 0;
  double cond = 10.0;
  double top = 1.0;
  double noise_sigma = 0.0;
  // lowrank-regression
  Index r = 0;
  // logistic
  int n_samples = 0;
  Index dim = 0, classes = 0;
  double l2 = 1e-3;
  // mlp
  Index in = 0, hidden = 0, out = 0;

  Problem build() const;
};

struct ScheduleSpec {
  enum class Type { Constant, WarmupCosine };
  Type type = Type::Constant;
  int warmup_steps = 0;
  double final_lr = 0.0;

  double lr_at(double base_lr, int step, int total_steps) const;
};

struct ExperimentConfig {
  std::string name;
  ProblemSpec problem;
  OptimizerConfig optimizer;
  int steps = 0;
  int batch_size = 0;  // 0 = exact deterministic gradients
  std::vector<std::uint64_t> seeds;
  ScheduleSpec schedule;
  int record_every = 1;
  std::string output_path;  // default output directory (overridable on the CLI)
};

// Strict parsers: unknown keys are rejected with a JSON-pointer-style path in
// the ConfigError message.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct RunRecord {
  int step = 0;
  double loss = 0.0;
  double f_gap = 0.0;
  double grad_frobenius = 0.0;
  double grad_trace_norm = 0.0;
  double dist_op = 0.0;
  double dist_f = 0.0;
  double update_frobenius = 0.0;
  double kernel_residual = 0.0;
  long long wall_nanos = 0;  // kept at 0 in CSV so reruns stay byte-identical
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  bool diverged = false;
  double final_loss = 0.0;
  long long wall_nanos_total = 0;  // real time, reported in the JSON summary only
};

// One deterministic trajectory: problem built from the problem seed, noise
// drawn from the run seed, metrics observed before each update.
RunResult run_single(const Problem& problem, const ExperimentConfig& cfg, std::uint64_t seed);
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed);

// Fixed CSV layout (header below); floating-point cells use shortest-trip
// scientific formatting and NaN is written literally as "nan".
extern const char* const kRunCsvHeader;
std::string run_records_to_csv(const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------
// Commands (CLI bodies, unit-testable without a subprocess)
// ---------------------------------------------------------------------------

// Exit codes: 0 ok, 1 check failure, 2 bad config/usage, 3 divergence.
int cmd_run(const std::string& config_path, const std::string& output_dir);
int cmd_verify(const std::string& suite, std::uint64_t seed);
int cmd_compare(const std::vector<std::string>& config_paths, const std::string& output_dir);
int cmd_sweep(const std::string& config_path, const std::string& output_dir);

// Index-parallel helper used by the seed/sweep loops. Worker count comes from
// the SGO_WORKERS environment variable, defaulting to min(hardware, 8).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace sgo
