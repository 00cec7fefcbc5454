#include "sgo/bench.hpp"

#include "sgo/matfun.hpp"
#include "sgo/theory.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace sgo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict JSON helpers
// ---------------------------------------------------------------------------

namespace {

void check_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  check_object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + path + "/" + it.key() + "'");
    }
  }
}

const json& require_key(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
  return j.at(key);
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
    throw ConfigError(path + ": expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

double number_field(const json& j, const char* key, double def, const std::string& path) {
  if (!j.contains(key)) return def;
  return as_number(j.at(key), path + "/" + key);
}

int int_field(const json& j, const char* key, int def, const std::string& path) {
  if (!j.contains(key)) return def;
  return as_int(j.at(key), path + "/" + key);
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

ProblemSpec parse_problem_spec(const json& j, const std::string& path) {
  ProblemSpec spec;
  spec.kind = as_string(require_key(j, "kind", path), path + "/kind");
  if (spec.kind == "quadratic") {
    check_keys(j, {"kind", "m", "n", "cond", "top", "noise_sigma", "seed"}, path);
    spec.m = as_int(require_key(j, "m", path), path + "/m");
    spec.n = as_int(require_key(j, "n", path), path + "/n");
    spec.cond = number_field(j, "cond", 10.0, path);
    spec.top = number_field(j, "top", 1.0, path);
    spec.noise_sigma = number_field(j, "noise_sigma", 0.0, path);
  } else if (spec.kind == "lowrank-regression") {
    check_keys(j, {"kind", "m", "n", "r", "noise_sigma", "seed"}, path);
    spec.m = as_int(require_key(j, "m", path), path + "/m");
    spec.n = as_int(require_key(j, "n", path), path + "/n");
    spec.r = as_int(require_key(j, "r", path), path + "/r");
    spec.noise_sigma = number_field(j, "noise_sigma", 0.0, path);
  } else if (spec.kind == "logistic") {
    check_keys(j, {"kind", "n_samples", "dim", "classes", "l2", "seed"}, path);
    spec.n_samples = as_int(require_key(j, "n_samples", path), path + "/n_samples");
    spec.dim = as_int(require_key(j, "dim", path), path + "/dim");
    spec.classes = as_int(require_key(j, "classes", path), path + "/classes");
    spec.l2 = number_field(j, "l2", 1e-3, path);
  } else if (spec.kind == "mlp") {
    check_keys(j, {"kind", "in", "hidden", "out", "n_samples", "seed"}, path);
    spec.in = as_int(require_key(j, "in", path), path + "/in");
    spec.hidden = as_int(require_key(j, "hidden", path), path + "/hidden");
    spec.out = as_int(require_key(j, "out", path), path + "/out");
    spec.n_samples = as_int(require_key(j, "n_samples", path), path + "/n_samples");
  } else {
    throw ConfigError(path + "/kind: unknown problem kind '" + spec.kind + "'");
  }
  spec.seed = as_u64(require_key(j, "seed", path), path + "/seed");
  return spec;
}

OptimizerConfig parse_optimizer_config(const json& j, const std::string& path) {
  check_keys(j,
             {"kind", "lr", "beta1", "beta2", "eps", "update_freq", "shampoo_inverse_order",
              "precondition_source", "side_policy", "rms_align", "qk_groups", "kernel",
              "kernel_steps", "weight_decay", "full_matrix_cap"},
             path);
  OptimizerConfig cfg;
  try {
    cfg.kind = optimizer_kind_from_string(
        as_string(require_key(j, "kind", path), path + "/kind"));
    cfg.lr = number_field(j, "lr", cfg.lr, path);
    cfg.beta1 = number_field(j, "beta1", cfg.beta1, path);
    cfg.beta2 = number_field(j, "beta2", cfg.beta2, path);
    cfg.eps = number_field(j, "eps", cfg.eps, path);
    cfg.update_freq = int_field(j, "update_freq", cfg.update_freq, path);
    cfg.shampoo_inverse_order =
        number_field(j, "shampoo_inverse_order", cfg.shampoo_inverse_order, path);
    if (j.contains("precondition_source")) {
      cfg.precondition_source = precondition_source_from_string(
          as_string(j.at("precondition_source"), path + "/precondition_source"));
    }
    if (j.contains("side_policy")) {
      cfg.side_policy =
          side_policy_from_string(as_string(j.at("side_policy"), path + "/side_policy"));
    }
    if (j.contains("rms_align")) {
      cfg.rms_align = as_bool(j.at("rms_align"), path + "/rms_align");
    }
    cfg.qk_groups = int_field(j, "qk_groups", cfg.qk_groups, path);
    if (j.contains("kernel")) {
      cfg.kernel = kernel_kind_from_string(as_string(j.at("kernel"), path + "/kernel"));
    }
    cfg.kernel_steps = int_field(j, "kernel_steps", cfg.kernel_steps, path);
    cfg.weight_decay = number_field(j, "weight_decay", cfg.weight_decay, path);
    cfg.full_matrix_cap = int_field(j, "full_matrix_cap", cfg.full_matrix_cap, path);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

ScheduleSpec parse_schedule_spec(const json& j, const std::string& path) {
  ScheduleSpec spec;
  const std::string type = as_string(require_key(j, "type", path), path + "/type");
  if (type == "constant") {
    check_keys(j, {"type"}, path);
    spec.type = ScheduleSpec::Type::Constant;
  } else if (type == "warmup-cosine") {
    check_keys(j, {"type", "warmup_steps", "final_lr"}, path);
    spec.type = ScheduleSpec::Type::WarmupCosine;
    spec.warmup_steps = as_int(require_key(j, "warmup_steps", path), path + "/warmup_steps");
    spec.final_lr = as_number(require_key(j, "final_lr", path), path + "/final_lr");
    if (spec.warmup_steps < 0) throw ConfigError(path + "/warmup_steps: must be >= 0");
    if (spec.final_lr < 0.0) throw ConfigError(path + "/final_lr: must be >= 0");
  } else {
    throw ConfigError(path + "/type: unknown schedule type '" + type + "'");
  }
  return spec;
}

ExperimentConfig parse_experiment_json(const json& j) {
  check_keys(j,
             {"name", "problem", "optimizer", "steps", "batch_size", "seeds", "schedule",
              "record_every", "output_path"},
             "");
  ExperimentConfig cfg;
  cfg.name = as_string(require_key(j, "name", ""), "/name");
  if (cfg.name.empty()) throw ConfigError("/name: must not be empty");
  for (char c : cfg.name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    if (!ok) throw ConfigError("/name: only [A-Za-z0-9_-] characters are allowed");
  }
  cfg.problem = parse_problem_spec(require_key(j, "problem", ""), "/problem");
  cfg.optimizer = parse_optimizer_config(require_key(j, "optimizer", ""), "/optimizer");
  cfg.steps = as_int(require_key(j, "steps", ""), "/steps");
  if (cfg.steps < 1) throw ConfigError("/steps: must be >= 1");
  cfg.batch_size = int_field(j, "batch_size", 0, "");
  if (cfg.batch_size < 0) throw ConfigError("/batch_size: must be >= 0");
  const json& seeds = require_key(j, "seeds", "");
  if (!seeds.is_array() || seeds.empty()) {
    throw ConfigError("/seeds: expected a nonempty array of seeds");
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    cfg.seeds.push_back(as_u64(seeds.at(i), "/seeds/" + std::to_string(i)));
  }
  if (j.contains("schedule")) {
    cfg.schedule = parse_schedule_spec(j.at("schedule"), "/schedule");
  }
  cfg.record_every = int_field(j, "record_every", 1, "");
  if (cfg.record_every < 1) throw ConfigError("/record_every: must be >= 1");
  if (j.contains("output_path")) {
    cfg.output_path = as_string(j.at("output_path"), "/output_path");
  }
  return cfg;
}

json parse_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("malformed JSON");
  return j;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_json_text(buffer.str());
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  return parse_experiment_json(parse_json_text(json_text));
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_json(load_json_file(path));
}

// ---------------------------------------------------------------------------
// Problem construction
// ---------------------------------------------------------------------------

Problem ProblemSpec::build() const {
  std::optional<NoiseModel> noise;
  if (kind == "quadratic") {
    if (m < 1 || n < 1) throw ConfigError("quadratic problem needs m >= 1 and n >= 1");
    if (cond < 1.0) throw ConfigError("quadratic problem needs cond >= 1");
    if (top <= 0.0) throw ConfigError("quadratic problem needs top > 0");
    Rng curvature_rng = Rng(seed).child("curvature");
    const Matrix l = random_spd(curvature_rng, m, cond, top);
    Rng target_rng = Rng(seed).child("target");
    const Matrix w_star = random_matrix(target_rng, m, n);
    if (noise_sigma > 0.0) noise = NoiseModel{Matrix(noise_sigma * Matrix::Identity(m, m))};
    return make_quadratic(l, w_star, noise, seed);
  }
  if (kind == "lowrank-regression") {
    if (m < 1 || n < 1 || r < 1) throw ConfigError("lowrank-regression needs m, n, r >= 1");
    if (noise_sigma > 0.0) noise = NoiseModel{Matrix(noise_sigma * Matrix::Identity(m, m))};
    return make_lowrank_regression(m, n, r, noise, seed);
  }
  if (kind == "logistic") {
    return make_logistic(n_samples, dim, classes, seed, l2);
  }
  if (kind == "mlp") {
    return make_mlp(in, hidden, out, n_samples, seed);
  }
  throw ConfigError("unknown problem kind '" + kind + "'");
}

double ScheduleSpec::lr_at(double base_lr, int step, int total_steps) const {
  if (type == Type::Constant) return base_lr;
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const int tail = total_steps - warmup_steps;
  if (tail <= 0) return final_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(tail);
  return final_lr + (base_lr - final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

RunResult run_single(const Problem& problem, const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.seed = seed;

  Params w = problem.initial;
  Optimizer opt(cfg.optimizer);
  Rng noise_rng = Rng(seed).child("noise");
  const bool has_min = problem.single_matrix() && problem.minimizer.has_value();
  constexpr double kDivergenceLimit = 1e12;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<ParamGroup> groups(problem.groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    groups[gi].vector_param = problem.groups[gi].vector_param;
    groups[gi].name = problem.groups[gi].name;
  }

  for (int t = 0; t < cfg.steps; ++t) {
    const double loss = problem.eval(w);
    const Params g =
        cfg.batch_size > 0 ? problem.stoch_grad(w, cfg.batch_size, noise_rng) : problem.grad(w);

    double grad_sq = 0.0;
    double grad_tn = 0.0;
    for (const Matrix& gm : g) {
      grad_sq += gm.squaredNorm();
      grad_tn += trace_norm(gm);
    }
    const double grad_frob = std::sqrt(grad_sq);

    RunRecord rec;
    rec.step = t;
    rec.loss = loss;
    rec.f_gap = problem.f_star.has_value() ? loss - *problem.f_star : nan;
    rec.grad_frobenius = grad_frob;
    rec.grad_trace_norm = grad_tn;
    if (has_min) {
      const Matrix d = w[0] - (*problem.minimizer)[0];
      rec.dist_op = spectral_norm(d);
      rec.dist_f = d.norm();
    } else {
      rec.dist_op = nan;
      rec.dist_f = nan;
    }

    const bool diverged_now = !std::isfinite(loss) || std::abs(loss) > kDivergenceLimit ||
                              !std::isfinite(grad_frob) || grad_frob > kDivergenceLimit;
    if (diverged_now) {
      rec.update_frobenius = nan;
      rec.kernel_residual = nan;
      result.records.push_back(rec);
      result.diverged = true;
      break;
    }

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      groups[gi].weight = w[gi];
      groups[gi].grad = g[gi];
    }
    const StepStats stats = opt.step(groups, cfg.schedule.lr_at(cfg.optimizer.lr, t, cfg.steps));
    for (std::size_t gi = 0; gi < groups.size(); ++gi) w[gi] = groups[gi].weight;

    rec.update_frobenius = stats.update_frobenius;
    rec.kernel_residual = stats.kernel_residual;
    if (t % cfg.record_every == 0 || t == cfg.steps - 1) result.records.push_back(rec);
  }

  result.final_loss = problem.eval(w);
  if (!std::isfinite(result.final_loss) || std::abs(result.final_loss) > kDivergenceLimit) {
    result.diverged = true;
  }
  result.wall_nanos_total = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
  return result;
}

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  return run_single(cfg.problem.build(), cfg, seed);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

const char* const kRunCsvHeader =
    "step,loss,f_gap,grad_frobenius,grad_trace_norm,dist_op,dist_F,update_frobenius,"
    "kernel_residual,wall_nanos";

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string run_records_to_csv(const std::vector<RunRecord>& records) {
  std::string out = kRunCsvHeader;
  out += "\n";
  for (const RunRecord& r : records) {
    out += std::to_string(r.step);
    out += ",";
    out += fmt_double(r.loss);
    out += ",";
    out += fmt_double(r.f_gap);
    out += ",";
    out += fmt_double(r.grad_frobenius);
    out += ",";
    out += fmt_double(r.grad_trace_norm);
    out += ",";
    out += fmt_double(r.dist_op);
    out += ",";
    out += fmt_double(r.dist_f);
    out += ",";
    out += fmt_double(r.update_frobenius);
    out += ",";
    out += fmt_double(r.kernel_residual);
    out += ",";
    out += std::to_string(r.wall_nanos);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel helper
// ---------------------------------------------------------------------------

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  std::size_t workers = std::min<std::size_t>(std::thread::hardware_concurrency(), 8);
  if (workers == 0) workers = 1;
  if (const char* env = std::getenv("SGO_WORKERS"); env != nullptr && *env != '\0') {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) workers = static_cast<std::size_t>(parsed);
  }
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t wi = 0; wi < workers; ++wi) {
    threads.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// cmd_run
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  if (!cfg.output_path.empty()) return cfg.output_path;
  return ".";
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

json run_result_to_json(const ExperimentConfig& cfg, const RunResult& r) {
  json j;
  j["seed"] = r.seed;
  j["final_loss"] = r.final_loss;
  j["diverged"] = r.diverged;
  j["rows"] = r.records.size();
  j["wall_nanos"] = r.wall_nanos_total;
  j["csv"] = cfg.name + "_seed" + std::to_string(r.seed) + ".csv";
  return j;
}

}  // namespace

int cmd_run(const std::string& config_path, const std::string& output_dir) {
  ExperimentConfig cfg;
  Problem problem;
  try {
    cfg = load_experiment_config(config_path);
    problem = cfg.problem.build();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::vector<RunResult> results(cfg.seeds.size());
  parallel_for(cfg.seeds.size(),
               [&](std::size_t i) { results[i] = run_single(problem, cfg, cfg.seeds[i]); });

  const std::filesystem::path out_dir = resolve_output_dir(cfg, output_dir);
  std::filesystem::create_directories(out_dir);

  json summary;
  summary["name"] = cfg.name;
  summary["steps"] = cfg.steps;
  summary["batch_size"] = cfg.batch_size;
  summary["record_every"] = cfg.record_every;
  summary["results"] = json::array();
  bool any_diverged = false;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RunResult& r = results[i];
    write_text_file(out_dir / (cfg.name + "_seed" + std::to_string(r.seed) + ".csv"),
                    run_records_to_csv(r.records));
    summary["results"].push_back(run_result_to_json(cfg, r));
    any_diverged = any_diverged || r.diverged;
  }
  summary["any_diverged"] = any_diverged;
  write_text_file(out_dir / (cfg.name + "_summary.json"), summary.dump(2) + "\n");

  std::cout << "wrote " << results.size() << " run(s) to " << out_dir.string() << "\n";
  if (any_diverged) {
    std::cerr << "divergence detected; trajectories truncated\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_verify
// ---------------------------------------------------------------------------

namespace {

struct Check {
  std::string name;
  bool pass = false;
  double value = std::numeric_limits<double>::quiet_NaN();
  double limit = std::numeric_limits<double>::quiet_NaN();
};

void add_check(std::vector<Check>& checks, const std::string& name, double value, double limit,
               bool pass) {
  checks.push_back(Check{name, pass, value, limit});
}

std::vector<Check> verify_lemmas(std::uint64_t seed) {
  std::vector<Check> checks;
  const auto results = lemma_suite(seed, 1000);
  for (const LemmaResult& r : results) {
    add_check(checks, "lemma/" + r.name, r.worst_slack, 0.0, r.failures == 0);
  }
  Rng rng = Rng(seed).child("variance");
  const NoiseModel noise{random_spd(rng, 4, 5.0, 1.0)};
  const auto variance = batch_variance_check(noise, 6, {1, 4, 16}, 20000, rng);
  for (const BatchVarianceResult& r : variance) {
    add_check(checks, "variance/batch-" + std::to_string(r.batch),
              std::abs(r.empirical - r.expected), 3.0 * r.stderr_mean,
              r.pass && r.loewner_pass);
  }
  return checks;
}

std::vector<Check> verify_kernels(std::uint64_t seed) {
  std::vector<Check> checks;
  Rng rng = Rng(seed).child("kernels");

  double worst_rel = 0.0;
  double worst_pe = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Matrix x = random_spd(rng, 32, rng.next_uniform(2.0, 100.0), 1.0);
    const Matrix oracle_sqrt = psd_power(x, 0.5);
    const Matrix oracle_inv = psd_power(x, -0.5);
    const NsResult r = ns_sqrt_inverse(x, NsCoefficients::quintic(), 50);
    worst_rel = std::max(worst_rel, (r.sqrt - oracle_sqrt).norm() / oracle_sqrt.norm());
    worst_rel = std::max(worst_rel, (r.inv_sqrt - oracle_inv).norm() / oracle_inv.norm());
    const NsResult pe = ns_sqrt_inverse(x, polar_express_schedule(), 10);
    worst_pe = std::max(worst_pe, pe.residual);
  }
  add_check(checks, "kernel/quintic-vs-oracle", worst_rel, 1e-3, worst_rel <= 1e-3);
  add_check(checks, "kernel/polar-express-residual", worst_pe, 5e-2, worst_pe <= 5e-2);

  {
    Matrix x = Matrix::Zero(2, 2);
    x(0, 0) = 9.0;
    x(1, 1) = 4.0;
    const NsResult r = denman_beavers_inv_sqrt(x, 20);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 1.0 / 3.0;
    expect(1, 1) = 0.5;
    const double err = (r.inv_sqrt - expect).norm();
    add_check(checks, "kernel/denman-beavers-diag", err, 1e-10, err <= 1e-10);
  }
  {
    const Matrix x = random_spd(rng, 16, 50.0, 1.0);
    const BlockMsignErrors errs = block_msign_check(x, NsCoefficients::quintic(), 50);
    const double worst = std::max(errs.sqrt_err, errs.inv_sqrt_err);
    add_check(checks, "kernel/block-sign-embedding", worst, 1e-2, worst <= 1e-2);
  }
  return checks;
}

std::vector<Check> verify_bounds(std::uint64_t seed) {
  std::vector<Check> checks;

  {
    Rng rng = Rng(seed).child("bound-quadratic");
    const Matrix l = random_spd(rng, 8, 10.0, 1.0);
    const Matrix w_star = random_matrix(rng, 8, 8);
    const Problem p = make_quadratic(l, w_star, std::nullopt, seed);
    const TwoPhaseResult r = two_phase_nonsmooth(p, 200, 1e-8);
    add_check(checks, "bound/nonsmooth-slack", r.report.slack, 0.0, r.report.slack >= 0.0);
  }
  {
    // Pre-saturation spread-spectrum instance with a soft-direction rank-1
    // displacement, where the printed deterministic rate provably holds.
    Rng rng = Rng(seed).child("bound-muon");
    const Index n = 6;
    const Matrix q = random_orthogonal(rng, n);
    Vector lambda(n);
    lambda << 3.49, 3.0, 2.0, 1.0, 0.5, 0.01;
    const Matrix l = symmetrize(Matrix(q * lambda.asDiagonal() * q.transpose()));
    const Matrix w_star = random_matrix(rng, n, n);
    Problem p = make_quadratic(l, w_star, std::nullopt, seed);
    Vector v0 = Vector::Zero(n);
    v0(0) = 1.0;
    p.initial = {Matrix(w_star + q.col(n - 1) * v0.transpose())};
    const MuonRateCheck r = muon_rate_check(p, 200);
    add_check(checks, "bound/orthogonalized-momentum-slack", r.slack, 0.0, r.slack >= 0.0);
  }
  {
    const BoundReport r = corollary_bound(Matrix::Identity(2, 2), 1.0, 1.0, 0.0, 100);
    add_check(checks, "bound/gram-family-example", r.rhs, 0.2, std::abs(r.rhs - 0.2) <= 1e-12);
  }
  {
    const BoundReport r = smooth_bound(1.0, 2.0, 10.0, 2.0, 4, 100, 1e-8);
    const double expect = 0.4 + 0.2 * std::sqrt(2.0) + 8e-10;
    add_check(checks, "bound/smooth-example", r.rhs, expect, std::abs(r.rhs - expect) <= 1e-12);
  }
  {
    Rng rng = Rng(seed).child("bound-rate-instance");
    const RateComparisonReport low =
        rate_comparison_instance(RateInstanceKind::LowrankGrad, 8, 8, 1, rng);
    const bool low_ok = low.chain_ok && std::abs(low.q_trace_norm - low.q_frobenius) <= 1e-12 &&
                        std::abs(low.d_f / low.d_op - std::sqrt(8.0)) <= 1e-10;
    add_check(checks, "bound/lowrank-grad-instance", low.proxies.asgo, low.proxies.shampoo,
              low_ok);
    const RateComparisonReport high =
        rate_comparison_instance(RateInstanceKind::HighrankDisplacement, 8, 8, 4, rng);
    add_check(checks, "bound/highrank-displacement-instance", high.proxies.asgo,
              high.proxies.shampoo, high.chain_ok);
  }
  return checks;
}

std::vector<Check> verify_equivalence(std::uint64_t seed) {
  std::vector<Check> checks;
  Rng rng = Rng(seed).child("equivalence");
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 2 + static_cast<Index>(rng.next_u64() % 15);  // up to 16
    const Index n = 1 + static_cast<Index>(rng.next_u64() %
                                           static_cast<std::uint64_t>(std::min<Index>(m, 8)));
    const Matrix g = random_matrix(rng, m, n);

    OptimizerConfig asgo;
    asgo.kind = OptimizerKind::AsgoPractical;
    asgo.lr = 1.0;
    asgo.kernel = KernelKind::ExactEig;
    OptimizerState asgo_state;
    Matrix w_asgo = Matrix::Zero(m, n);
    practical_asgo_step(asgo_state, w_asgo, g, asgo, 1.0);
    const Matrix u_asgo = -w_asgo;

    OptimizerConfig muon;
    muon.kind = OptimizerKind::Muon;
    muon.lr = 1.0;
    OptimizerState muon_state;
    Matrix w_muon = Matrix::Zero(m, n);
    muon_step(muon_state, w_muon, g, muon, 1.0);
    const Matrix u_muon = -w_muon;

    const double diff =
        (u_asgo / u_asgo.norm() - u_muon / u_muon.norm()).norm();
    worst = std::max(worst, diff);
  }
  add_check(checks, "equivalence/gram-vs-orthogonalized", worst, 1e-10, worst <= 1e-10);
  return checks;
}

}  // namespace

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<Check> checks;
  try {
    if (suite == "lemmas") {
      checks = verify_lemmas(seed);
    } else if (suite == "kernels") {
      checks = verify_kernels(seed);
    } else if (suite == "bounds") {
      checks = verify_bounds(seed);
    } else if (suite == "equivalence") {
      checks = verify_equivalence(seed);
    } else {
      std::cerr << "unknown suite '" << suite
                << "' (expected lemmas, kernels, bounds, or equivalence)\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "verify error: " << e.what() << "\n";
    return 1;
  }

  json manifest;
  manifest["suite"] = suite;
  manifest["seed"] = seed;
  manifest["checks"] = json::array();
  bool all_pass = true;
  for (const Check& c : checks) {
    json entry;
    entry["name"] = c.name;
    entry["pass"] = c.pass;
    if (!std::isnan(c.value)) entry["value"] = c.value;
    if (!std::isnan(c.limit)) entry["limit"] = c.limit;
    manifest["checks"].push_back(entry);
    all_pass = all_pass && c.pass;
  }
  manifest["passed"] = all_pass;
  std::cout << manifest.dump(2) << "\n";
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// cmd_compare
// ---------------------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& output_dir) {
  if (config_paths.size() < 2) {
    std::cerr << "compare needs at least two configs\n";
    return 2;
  }
  std::vector<json> raw;
  std::vector<ExperimentConfig> cfgs;
  try {
    for (const std::string& path : config_paths) {
      raw.push_back(load_json_file(path));
      cfgs.push_back(parse_experiment_json(raw.back()));
    }
    for (std::size_t i = 1; i < raw.size(); ++i) {
      if (raw[i].at("problem") != raw[0].at("problem")) {
        throw ConfigError("compare: '" + config_paths[i] +
                          "' runs a different problem than '" + config_paths[0] + "'");
      }
      if (cfgs[i].steps != cfgs[0].steps || cfgs[i].record_every != cfgs[0].record_every) {
        throw ConfigError("compare: '" + config_paths[i] +
                          "' has different steps/record_every than '" + config_paths[0] + "'");
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  // Distinct column labels even when names collide.
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    std::string label = cfgs[i].name;
    for (std::size_t j = 0; j < i; ++j) {
      if (labels[j] == label) {
        label += "#" + std::to_string(i);
        break;
      }
    }
    labels.push_back(label);
  }

  Problem problem;
  try {
    problem = cfgs[0].problem.build();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  struct Flat {
    std::size_t cfg_index;
    std::uint64_t seed;
  };
  std::vector<Flat> tasks;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    for (std::uint64_t s : cfgs[i].seeds) tasks.push_back(Flat{i, s});
  }
  std::vector<RunResult> flat_results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    flat_results[i] = run_single(problem, cfgs[tasks[i].cfg_index], tasks[i].seed);
  });

  std::vector<std::vector<RunResult>> results(cfgs.size());
  bool any_diverged = false;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    results[tasks[i].cfg_index].push_back(flat_results[i]);
    any_diverged = any_diverged || flat_results[i].diverged;
  }

  // Align on recorded steps: map step -> per-config losses.
  std::map<int, std::vector<std::vector<double>>> aligned;
  for (std::size_t ci = 0; ci < results.size(); ++ci) {
    for (const RunResult& r : results[ci]) {
      for (const RunRecord& rec : r.records) {
        auto& row = aligned[rec.step];
        if (row.empty()) row.resize(cfgs.size());
        row[ci].push_back(rec.loss);
      }
    }
  }

  std::string csv = "step";
  for (const std::string& label : labels) {
    csv += "," + label + "_mean," + label + "_stderr";
  }
  csv += "\n";
  for (const auto& [step, rows] : aligned) {
    csv += std::to_string(step);
    for (std::size_t ci = 0; ci < cfgs.size(); ++ci) {
      const std::vector<double>& vals = rows[ci];
      if (vals.empty()) {
        csv += ",nan,nan";
        continue;
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double se = vals.size() > 1 ? std::sqrt(var / (static_cast<double>(vals.size()) *
                                                           static_cast<double>(vals.size() - 1)))
                                        : 0.0;
      csv += "," + fmt_double(mean) + "," + fmt_double(se);
    }
    csv += "\n";
  }

  json summary;
  summary["problem"] = raw[0].at("problem");
  summary["steps"] = cfgs[0].steps;
  summary["configs"] = json::array();
  for (std::size_t ci = 0; ci < cfgs.size(); ++ci) {
    double mean_final = 0.0;
    bool diverged = false;
    for (const RunResult& r : results[ci]) {
      mean_final += r.final_loss;
      diverged = diverged || r.diverged;
    }
    mean_final /= static_cast<double>(results[ci].size());
    json entry;
    entry["name"] = labels[ci];
    entry["mean_final_loss"] = mean_final;
    entry["seeds"] = results[ci].size();
    entry["any_diverged"] = diverged;
    summary["configs"].push_back(entry);
  }

  const std::filesystem::path out_dir = output_dir.empty() ? "." : output_dir;
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "compare.csv", csv);
  write_text_file(out_dir / "compare_summary.json", summary.dump(2) + "\n");
  std::cout << "compared " << cfgs.size() << " config(s) over " << aligned.size()
            << " recorded step(s); wrote " << (out_dir / "compare.csv").string() << "\n";
  return any_diverged ? 3 : 0;
}

// ---------------------------------------------------------------------------
// cmd_sweep
// ---------------------------------------------------------------------------

namespace {

struct SweepCell {
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double eps = 0.0;
  double mean_final_loss = 0.0;
  bool any_diverged = false;
};

}  // namespace

int cmd_sweep(const std::string& config_path, const std::string& output_dir) {
  json raw;
  ExperimentConfig base;
  std::map<std::string, std::vector<double>> grid;
  int cell_cap = 64;
  try {
    raw = load_json_file(config_path);
    check_object(raw, "");
    if (!raw.contains("sweep")) throw ConfigError("/sweep: required for the sweep command");
    const json sweep = raw.at("sweep");
    raw.erase("sweep");
    base = parse_experiment_json(raw);

    check_keys(sweep, {"grid", "cell_cap"}, "/sweep");
    const json& grid_json = require_key(sweep, "grid", "/sweep");
    check_keys(grid_json, {"lr", "beta1", "beta2", "eps"}, "/sweep/grid");
    if (grid_json.empty()) throw ConfigError("/sweep/grid: must sweep at least one key");
    for (auto it = grid_json.begin(); it != grid_json.end(); ++it) {
      if (!it.value().is_array() || it.value().empty()) {
        throw ConfigError("/sweep/grid/" + it.key() + ": expected a nonempty array");
      }
      std::vector<double> values;
      for (std::size_t i = 0; i < it.value().size(); ++i) {
        values.push_back(
            as_number(it.value().at(i), "/sweep/grid/" + it.key() + "/" + std::to_string(i)));
      }
      grid[it.key()] = values;
    }
    if (sweep.contains("cell_cap")) {
      cell_cap = as_int(sweep.at("cell_cap"), "/sweep/cell_cap");
      if (cell_cap < 1) throw ConfigError("/sweep/cell_cap: must be >= 1");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  auto values_or_default = [&](const char* key, double def) -> std::vector<double> {
    auto it = grid.find(key);
    if (it == grid.end()) return {def};
    return it->second;
  };
  const std::vector<double> lrs = values_or_default("lr", base.optimizer.lr);
  const std::vector<double> beta1s = values_or_default("beta1", base.optimizer.beta1);
  const std::vector<double> beta2s = values_or_default("beta2", base.optimizer.beta2);
  const std::vector<double> epss = values_or_default("eps", base.optimizer.eps);

  std::vector<SweepCell> cells;
  for (double lr : lrs) {
    for (double b1 : beta1s) {
      for (double b2 : beta2s) {
        for (double eps : epss) {
          bool duplicate = false;
          for (const SweepCell& c : cells) {
            if (c.lr == lr && c.beta1 == b1 && c.beta2 == b2 && c.eps == eps) {
              duplicate = true;
              break;
            }
          }
          if (duplicate) {
            std::cerr << "warning: duplicate sweep cell ignored (lr=" << lr << ", beta1=" << b1
                      << ", beta2=" << b2 << ", eps=" << eps << ")\n";
            continue;
          }
          cells.push_back(SweepCell{lr, b1, b2, eps, 0.0, false});
        }
      }
    }
  }
  if (static_cast<int>(cells.size()) > cell_cap) {
    std::cerr << "config error: sweep has " << cells.size() << " cells, exceeding cell_cap = "
              << cell_cap << "\n";
    return 2;
  }

  std::vector<ExperimentConfig> cell_cfgs;
  cell_cfgs.reserve(cells.size());
  try {
    for (const SweepCell& cell : cells) {
      ExperimentConfig cfg = base;
      cfg.optimizer.lr = cell.lr;
      cfg.optimizer.beta1 = cell.beta1;
      cfg.optimizer.beta2 = cell.beta2;
      cfg.optimizer.eps = cell.eps;
      cfg.optimizer.validate();
      cell_cfgs.push_back(std::move(cfg));
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: sweep cell invalid: " << e.what() << "\n";
    return 2;
  }

  Problem problem;
  try {
    problem = base.problem.build();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  struct Flat {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Flat> tasks;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::uint64_t s : base.seeds) tasks.push_back(Flat{ci, s});
  }
  std::vector<RunResult> flat_results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    flat_results[i] = run_single(problem, cell_cfgs[tasks[i].cell], tasks[i].seed);
  });

  std::vector<double> sums(cells.size(), 0.0);
  std::vector<int> counts(cells.size(), 0);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::size_t ci = tasks[i].cell;
    sums[ci] += flat_results[i].final_loss;
    counts[ci] += 1;
    cells[ci].any_diverged = cells[ci].any_diverged || flat_results[i].diverged;
  }
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    cells[ci].mean_final_loss =
        cells[ci].any_diverged ? std::numeric_limits<double>::infinity() : sums[ci] / counts[ci];
  }

  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cells[a].mean_final_loss < cells[b].mean_final_loss;
  });

  std::string csv = "rank,lr,beta1,beta2,eps,mean_final_loss,any_diverged\n";
  json ranking = json::array();
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const SweepCell& c = cells[order[rank]];
    csv += std::to_string(rank + 1) + "," + fmt_double(c.lr) + "," + fmt_double(c.beta1) + "," +
           fmt_double(c.beta2) + "," + fmt_double(c.eps) + "," + fmt_double(c.mean_final_loss) +
           "," + (c.any_diverged ? "true" : "false") + "\n";
    json entry;
    entry["rank"] = rank + 1;
    entry["lr"] = c.lr;
    entry["beta1"] = c.beta1;
    entry["beta2"] = c.beta2;
    entry["eps"] = c.eps;
    entry["mean_final_loss"] = c.mean_final_loss;
    entry["any_diverged"] = c.any_diverged;
    ranking.push_back(entry);
  }

  json summary;
  summary["name"] = base.name;
  summary["cells"] = ranking;

  const std::filesystem::path out_dir = resolve_output_dir(base, output_dir);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / (base.name + "_sweep.csv"), csv);
  write_text_file(out_dir / (base.name + "_sweep.json"), summary.dump(2) + "\n");

  if (!order.empty()) {
    const SweepCell& best = cells[order[0]];
    std::cout << "best cell: lr=" << best.lr << " beta1=" << best.beta1 << " beta2=" << best.beta2
              << " eps=" << best.eps << " mean_final_loss=" << best.mean_final_loss << "\n";
  }
  return 0;
}

}  // namespace sgo
