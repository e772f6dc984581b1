#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mtlab/analysis.hpp"
#include "mtlab/regimes.hpp"
#include "mtlab/svg.hpp"
#include "mtlab/tasks.hpp"

namespace mtlab {

// Environment variable added to every seed the planner emits, so a whole sweep
// can be replicated under fresh randomness without editing the sweep file.
inline constexpr const char* kSeedOffsetEnv = "MTLAB_SEED_OFFSET";

inline std::uint64_t seed_offset_from_env() {
  const char* v = std::getenv(kSeedOffsetEnv);
  if (!v || !*v) return 0;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(kSeedOffsetEnv) + " must be a non-negative integer");
  }
}

// A sweep: one base experiment plus named axes. Axis semantics follow the
// grids used for front tracing: the low-resource sampling rate, the peak
// learning rate, the fine-tune warmup, and the pre-training length.
struct SweepPlan {
  RunConfig base;
  int low_task = -1;
  int high_task = -1;
  long base_warmup = 0;
  long finetune_warmup = 0;
  double finetune_peak_lr = 0.0;
  bool save_checkpoints = false;

  std::vector<double> axis_w_low;
  std::vector<double> axis_peak_lr;
  std::vector<long> axis_finetune_warmup;
  std::vector<long> axis_pretrain_steps;
  bool pretrain_axis_fixed_finetune = false;  // otherwise N1 varies inside fixed N
  std::vector<std::uint64_t> seeds;

  std::vector<RunConfig> enumerate() const;
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string format_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

// Derives the per-run schedules from the sweep-level knobs and stamps a
// collision-free run id from the axis values and seed.
inline RunConfig materialize_run(const SweepPlan& plan, double w_low, double peak_lr,
                                 long finetune_warmup, long n1, std::uint64_t seed) {
  RunConfig c = plan.base;
  c.seed = seed;
  const bool two_phase = is_two_phase(c.regime);
  if (two_phase) {
    if (plan.pretrain_axis_fixed_finetune)
      c.total_steps = n1 + (plan.base.total_steps - plan.base.pretrain_steps);
    c.pretrain_steps = n1;
    if (c.pretrain_steps <= 0 || c.pretrain_steps >= c.total_steps)
      throw std::invalid_argument("sweep: pretrain_steps grid leaves no room for phase 2");
  }
  if (c.tasks.size() == 2 && plan.low_task >= 0) {
    std::vector<double> w(2, 0.0);
    w[static_cast<std::size_t>(plan.low_task)] = w_low;
    w[static_cast<std::size_t>(plan.high_task)] = 1.0 - w_low;
    c.w_finetune = WeightVector(w);
    if (c.regime == Regime::transfer_only)
      c.w_finetune = WeightVector::one_hot(2, static_cast<std::size_t>(plan.low_task));
  }
  if (two_phase && c.regime != Regime::restart)
    c.w_pretrain = WeightVector::one_hot(c.tasks.size(),
                                         static_cast<std::size_t>(plan.high_task));

  const long phase1_len = two_phase ? c.pretrain_steps : c.total_steps;
  c.schedule_phase1 =
      ScheduleSpec{ScheduleSpec::Kind::warmup_cosine, std::min(plan.base_warmup, phase1_len),
                   c.regime == Regime::restart ? c.total_steps : phase1_len, peak_lr};
  if (two_phase) {
    const double peak2 = plan.finetune_peak_lr > 0.0 ? plan.finetune_peak_lr : peak_lr;
    c.schedule_phase2 =
        ScheduleSpec{ScheduleSpec::Kind::warmup_cosine,
                     std::min(finetune_warmup, c.finetune_steps()), c.finetune_steps(), peak2};
  }

  std::ostringstream id;
  id << regime_name(c.regime);
  if (!plan.axis_w_low.empty() || plan.low_task >= 0) id << "_w" << detail::format_g(w_low);
  id << "_lr" << detail::format_g(peak_lr);
  if (two_phase) id << "_n1" << c.pretrain_steps << "_fw" << finetune_warmup;
  id << "_s" << seed;
  c.run_id = id.str();
  return c;
}

inline std::vector<RunConfig> SweepPlan::enumerate() const {
  const std::uint64_t offset = seed_offset_from_env();
  std::vector<double> ws = axis_w_low;
  if (ws.empty())
    ws.push_back(low_task >= 0 && base.w_finetune.size() == 2
                     ? base.w_finetune[static_cast<std::size_t>(low_task)]
                     : 0.0);
  std::vector<double> lrs = axis_peak_lr;
  if (lrs.empty()) lrs.push_back(base.schedule_phase1.peak_lr);
  std::vector<long> fws = axis_finetune_warmup;
  if (fws.empty()) fws.push_back(finetune_warmup);
  std::vector<long> n1s = axis_pretrain_steps;
  if (n1s.empty()) n1s.push_back(base.pretrain_steps);
  std::vector<std::uint64_t> ss = seeds;
  if (ss.empty()) ss.push_back(base.seed);

  std::vector<RunConfig> out;
  for (double w : ws)
    for (double lr : lrs)
      for (long fw : fws)
        for (long n1 : n1s)
          for (std::uint64_t s : ss) {
            RunConfig c = materialize_run(*this, w, lr, fw, n1, s + offset);
            c.validate();
            out.push_back(std::move(c));
          }
  // collision-free by construction; double-check because axis values could
  // collide after %g formatting
  std::vector<std::string> ids;
  for (const RunConfig& c : out) ids.push_back(c.run_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("sweep: duplicate run ids in grid");
  return out;
}

// ---- sweep file --------------------------------------------------------------
// Plain text, diff-friendly:
//   [base]
//   regime = static
//   tasks_file = pair.tasks
//   ...
//   [axes]
//   w_low = 0.1,0.2,0.3
//   seeds = 1,2,3

inline SweepPlan parse_sweep_text(const std::string& text, const std::string& base_dir) {
  SweepPlan plan;
  RunConfig& c = plan.base;
  c.eval_every = 0;  // filled after total_steps is known
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  double base_w_low = -1.0, tau = 0.0;
  std::vector<double> explicit_w;

  auto parse_kv = [&](const std::string& key, const std::string& val) {
    try {
      if (section == "base") {
        if (key == "regime") c.regime = regime_from(val);
        else if (key == "tasks_file") {
          const std::filesystem::path p = std::filesystem::path(val).is_absolute()
                                              ? std::filesystem::path(val)
                                              : std::filesystem::path(base_dir) / val;
          c.tasks = load_task_suite(p.string());
        } else if (key == "total_steps") c.total_steps = std::stol(val);
        else if (key == "pretrain_steps") c.pretrain_steps = std::stol(val);
        else if (key == "batch_size") c.batch_size = std::stoi(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "eval_every") c.eval_every = std::stol(val);
        else if (key == "eval_batch_size") c.eval_batch_size = std::stoi(val);
        else if (key == "peak_lr") c.schedule_phase1.peak_lr = std::stod(val);
        else if (key == "warmup_steps") plan.base_warmup = std::stol(val);
        else if (key == "finetune_warmup_steps") plan.finetune_warmup = std::stol(val);
        else if (key == "finetune_peak_lr") plan.finetune_peak_lr = std::stod(val);
        else if (key == "low_task") plan.low_task = std::stoi(val);
        else if (key == "high_task") plan.high_task = std::stoi(val);
        else if (key == "w_low") base_w_low = std::stod(val);
        else if (key == "tau") tau = std::stod(val);
        else if (key == "w") {
          for (const std::string& s : detail::split_list(val)) explicit_w.push_back(std::stod(s));
        } else if (key == "save_checkpoints") plan.save_checkpoints = val == "true" || val == "1";
        else if (key == "encoder_layers") c.model.encoder_layers = std::stoi(val);
        else if (key == "decoder_layers") c.model.decoder_layers = std::stoi(val);
        else if (key == "model_dim") c.model.model_dim = std::stoi(val);
        else if (key == "ff_dim") c.model.ff_dim = std::stoi(val);
        else if (key == "heads") c.model.heads = std::stoi(val);
        else if (key == "qkv_dim") c.model.qkv_dim = std::stoi(val);
        else if (key == "vocab_size") c.model.vocab_size = std::stoi(val);
        else if (key == "max_len") c.model.max_len = std::stoi(val);
        else if (key == "dropout") c.model.dropout = std::stod(val);
        else if (key == "label_smoothing") c.model.label_smoothing = std::stod(val);
        else throw std::invalid_argument("unknown base key '" + key + "'");
      } else if (section == "axes") {
        const auto items = detail::split_list(val);
        if (key == "w_low")
          for (const auto& s : items) plan.axis_w_low.push_back(std::stod(s));
        else if (key == "peak_lr")
          for (const auto& s : items) plan.axis_peak_lr.push_back(std::stod(s));
        else if (key == "finetune_warmup_steps")
          for (const auto& s : items) plan.axis_finetune_warmup.push_back(std::stol(s));
        else if (key == "pretrain_steps")
          for (const auto& s : items) plan.axis_pretrain_steps.push_back(std::stol(s));
        else if (key == "pretrain_axis")
          plan.pretrain_axis_fixed_finetune = items.at(0) == "fixed_finetune";
        else if (key == "seeds")
          for (const auto& s : items) plan.seeds.push_back(std::stoull(s));
        else throw std::invalid_argument("unknown axes key '" + key + "'");
      } else {
        throw std::invalid_argument("key outside [base]/[axes] section");
      }
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::invalid_argument("bad value for '" + key + "': " + e.what());
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim_copy(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "base" && section != "axes")
        throw std::invalid_argument("sweep line " + std::to_string(lineno) +
                                    ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("sweep line " + std::to_string(lineno) + ": expected key = value");
    try {
      parse_kv(detail::trim_copy(line.substr(0, eq)), detail::trim_copy(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sweep line " + std::to_string(lineno) + ": " + e.what());
    }
  }

  if (c.tasks.empty()) throw std::invalid_argument("sweep: tasks_file is required");
  if (c.model.vocab_size < suite_vocab_size(c.tasks))
    c.model.vocab_size = suite_vocab_size(c.tasks);
  if (c.eval_every == 0) c.eval_every = default_eval_every(c.total_steps);
  if (plan.low_task < 0 && c.tasks.size() == 2) {
    // smallest train pool is the low-resource task
    plan.low_task = c.tasks[0].train_size <= c.tasks[1].train_size ? 0 : 1;
    plan.high_task = 1 - plan.low_task;
  }
  if (!explicit_w.empty())
    c.w_finetune = WeightVector(explicit_w);
  else if (tau > 0.0) {
    std::vector<double> sizes;
    for (const TaskSpec& t : c.tasks) sizes.push_back(static_cast<double>(t.train_size));
    c.w_finetune = WeightVector(temperature_distribution(empirical_distribution(sizes), tau));
  } else if (c.tasks.size() == 2 && base_w_low >= 0.0) {
    std::vector<double> w(2, 0.0);
    w[static_cast<std::size_t>(plan.low_task)] = base_w_low;
    w[static_cast<std::size_t>(plan.high_task)] = 1.0 - base_w_low;
    c.w_finetune = WeightVector(w);
  } else if (c.w_finetune.size() == 0) {
    c.w_finetune = WeightVector(std::vector<double>(
        c.tasks.size(), 1.0 / static_cast<double>(c.tasks.size())));
  }
  if (is_two_phase(c.regime) && c.regime != Regime::restart && plan.high_task >= 0)
    c.w_pretrain = WeightVector::one_hot(c.tasks.size(),
                                         static_cast<std::size_t>(plan.high_task));
  return plan;
}

inline SweepPlan load_sweep_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_sweep_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

// ---- execution ---------------------------------------------------------------

struct ExecReport {
  int completed = 0;
  int skipped = 0;
  int failed = 0;
  std::vector<std::string> failures;
};

inline bool run_file_complete(const std::string& path) {
  std::ifstream f(path);
  if (!f) return false;
  std::string line, last;
  while (std::getline(f, line))
    if (!line.empty()) last = line;
  return last.find("\"type\":\"final\"") != std::string::npos;
}

// Dispatches independent runs to a bounded worker pool. Already-complete runs
// are skipped; per-run failures are recorded without stopping siblings.
inline ExecReport execute_plan(const std::vector<RunConfig>& configs,
                               const std::vector<TaskDataset>& datasets,
                               const std::string& out_dir, int parallelism,
                               bool save_checkpoints = false, bool quiet = false) {
  if (parallelism < 1) throw std::invalid_argument("execute_plan: parallelism must be positive");
  std::filesystem::create_directories(out_dir);
  ExecReport report;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      RunConfig config = configs[i];
      const std::string path = out_dir + "/" + config.run_id + ".jsonl";
      if (run_file_complete(path)) {
        std::lock_guard lock(mu);
        ++report.skipped;
        if (!quiet) std::fprintf(stderr, "skip %s (complete)\n", config.run_id.c_str());
        continue;
      }
      try {
        if (save_checkpoints && is_two_phase(config.regime))
          config.checkpoint_path = out_dir + "/" + config.run_id + ".ckpt";
        RunResult result = run_regime(config, datasets);
        save_run_result(path, result);
        std::lock_guard lock(mu);
        ++report.completed;
        if (!quiet)
          std::fprintf(stderr, "done %s (%.1fs, %ld steps)\n", config.run_id.c_str(),
                       result.wall_seconds, result.steps_run);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        ++report.failed;
        report.failures.push_back(config.run_id + ": " + e.what());
        if (!quiet) std::fprintf(stderr, "FAIL %s: %s\n", config.run_id.c_str(), e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(parallelism, static_cast<int>(configs.size()));
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return report;
}

inline ExecReport execute_plan(const SweepPlan& plan, const std::string& out_dir,
                               int parallelism, bool quiet = false) {
  const std::vector<RunConfig> configs = plan.enumerate();
  const std::vector<TaskDataset> datasets = generate_suite(plan.base.tasks);
  return execute_plan(configs, datasets, out_dir, parallelism, plan.save_checkpoints, quiet);
}

// ---- emitters ----------------------------------------------------------------

namespace detail {

inline std::vector<RunResult> load_all_results(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<RunResult> out;
  for (const std::string& p : paths) out.push_back(load_run_result(p));
  if (out.empty()) throw std::runtime_error("no .jsonl results in " + dir);
  return out;
}

inline int low_task_of(const RunConfig& c) {
  int low = 0;
  long best = std::numeric_limits<long>::max();
  for (std::size_t i = 0; i < c.tasks.size(); ++i)
    if (c.tasks[i].train_size < best) {
      best = c.tasks[i].train_size;
      low = static_cast<int>(i);
    }
  return low;
}

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// front.csv + front.svg: final per-task losses of every run, the undominated
// set flagged in the on_front column.
inline void emit_front(const std::string& dir) {
  const std::vector<RunResult> results = detail::load_all_results(dir);
  std::vector<ParetoPoint> points;
  for (const RunResult& r : results) {
    ParetoPoint p;
    p.losses = r.final_loss;
    p.run_id = r.config.run_id;
    p.regime = regime_name(r.config.regime);
    p.w_low = r.config.w_finetune[static_cast<std::size_t>(detail::low_task_of(r.config))];
    p.validate();
    points.push_back(std::move(p));
  }
  const std::vector<ParetoPoint> front = pareto_front(points);
  auto on_front = [&](const ParetoPoint& p) {
    for (const ParetoPoint& f : front)
      if (f.run_id == p.run_id) return 1;
    return 0;
  };

  const std::size_t k = points[0].losses.size();
  std::ostringstream csv;
  csv << "run_id,regime,w_low";
  for (std::size_t i = 0; i < k; ++i) csv << ",loss_task_" << i;
  csv << ",on_front\n";
  for (const ParetoPoint& p : points) {
    csv << p.run_id << "," << p.regime << "," << detail::csv_num(p.w_low);
    for (double v : p.losses) csv << "," << detail::csv_num(v);
    csv << "," << on_front(p) << "\n";
  }
  atomic_write_text(dir + "/front.csv", csv.str());

  if (k == 2) {
    const int low = detail::low_task_of(results[0].config);
    const int high = 1 - low;
    SvgPlot plot("final loss trade-off", "high-resource eval loss", "low-resource eval loss");
    std::map<std::string, std::vector<std::pair<double, double>>> by_regime;
    for (const ParetoPoint& p : points)
      by_regime[p.regime].push_back({p.losses[static_cast<std::size_t>(high)],
                                     p.losses[static_cast<std::size_t>(low)]});
    for (auto& [name, pts] : by_regime) {
      std::sort(pts.begin(), pts.end());
      plot.add_series(name, pts, false, true);
    }
    std::vector<std::pair<double, double>> fr;
    for (const ParetoPoint& p : front)
      fr.push_back({p.losses[static_cast<std::size_t>(high)],
                    p.losses[static_cast<std::size_t>(low)]});
    std::sort(fr.begin(), fr.end());
    plot.add_series("front", fr, true, false);
    atomic_write_text(dir + "/front.svg", plot.render());
  }
}

// efficiency_<run>.csv per run (task_id, examples_seen, eval_loss, phase) and a
// combined plot for the low-resource task.
inline void emit_efficiency(const std::string& dir, int task_id = -1) {
  const std::vector<RunResult> results = detail::load_all_results(dir);
  SvgPlot plot("data efficiency", "examples seen", "eval loss");
  for (const RunResult& r : results) {
    const int task = task_id >= 0 ? task_id : detail::low_task_of(r.config);
    std::ostringstream csv;
    csv << "task_id,examples_seen,eval_loss,phase\n";
    for (const EfficiencyPoint& p : efficiency_curve(r, task)) {
      csv << task << "," << p.examples_seen << "," << detail::csv_num(p.eval_loss) << ","
          << p.phase << "\n";
    }
    atomic_write_text(dir + "/efficiency_" + r.config.run_id + ".csv", csv.str());
    std::vector<std::pair<double, double>> pts;
    for (const EfficiencyPoint& p : efficiency_curve(r, task))
      pts.push_back({static_cast<double>(p.examples_seen), p.eval_loss});
    plot.add_series(r.config.run_id, pts, true, false);
  }
  atomic_write_text(dir + "/efficiency.svg", plot.render());
}

// curves_<run>.csv: the full evaluation time series of each run.
inline void emit_curves(const std::string& dir) {
  const std::vector<RunResult> results = detail::load_all_results(dir);
  for (const RunResult& r : results) {
    const std::size_t k = r.config.tasks.size();
    std::ostringstream csv;
    csv << "step,phase,lr,train_loss";
    for (std::size_t i = 0; i < k; ++i)
      csv << ",loss_task_" << i << ",loss0_task_" << i << ",train_pool_loss_" << i
          << ",examples_task_" << i;
    csv << "\n";
    for (const EvalRecord& rec : r.records) {
      csv << rec.step << "," << rec.phase << "," << detail::csv_num(rec.lr) << ",";
      if (std::isfinite(rec.train_loss)) csv << detail::csv_num(rec.train_loss);
      for (std::size_t i = 0; i < k; ++i)
        csv << "," << detail::csv_num(rec.eval_loss[i]) << ","
            << detail::csv_num(rec.eval_loss_unsmoothed[i]) << ","
            << detail::csv_num(rec.train_pool_loss[i]) << "," << rec.examples_seen[i];
      csv << "\n";
    }
    atomic_write_text(dir + "/curves_" + r.config.run_id + ".csv", csv.str());
  }
}

// ---- stored-result verification ----------------------------------------------

// Re-checks result invariants; returns human-readable violations.
inline std::vector<std::string> verify_results(const std::string& dir) {
  std::vector<std::string> problems;
  std::vector<std::string> seen_ids;
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    problems.push_back("no result files in " + dir);
    return problems;
  }
  for (const std::string& path : paths) {
    const std::string name = std::filesystem::path(path).stem().string();
    RunResult r;
    try {
      r = load_run_result(path);
    } catch (const std::exception& e) {
      problems.push_back(name + ": unreadable (" + e.what() + ")");
      continue;
    }
    auto complain = [&](const std::string& what) { problems.push_back(name + ": " + what); };
    if (r.config.run_id != name) complain("run_id does not match filename");
    if (std::find(seen_ids.begin(), seen_ids.end(), r.config.run_id) != seen_ids.end())
      complain("duplicate run_id");
    seen_ids.push_back(r.config.run_id);
    if (r.steps_run != r.config.total_steps) complain("steps_run != total_steps");
    const auto expected =
        static_cast<std::size_t>(r.config.total_steps / r.config.eval_every) + 1;
    if (r.records.size() != expected)
      complain("expected " + std::to_string(expected) + " evaluation records, found " +
               std::to_string(r.records.size()));
    if (r.final_loss != r.records.back().eval_loss)
      complain("final losses differ from last record");
    if (r.final_examples_seen != r.records.back().examples_seen)
      complain("final counters differ from last record");
    long total_examples = 0;
    for (long v : r.records.back().examples_seen) total_examples += v;
    if (total_examples != r.config.total_steps * r.config.batch_size)
      complain("counters do not sum to steps * batch");
    for (std::size_t i = 1; i < r.records.size(); ++i) {
      for (std::size_t t = 0; t < r.records[i].examples_seen.size(); ++t)
        if (r.records[i].examples_seen[t] < r.records[i - 1].examples_seen[t]) {
          complain("examples_seen decreases at step " + std::to_string(r.records[i].step));
          break;
        }
      if (r.records[i].step <= r.records[i - 1].step) {
        complain("record steps not increasing");
        break;
      }
    }
  }
  // front.csv, when present, must agree with a fresh dominance computation
  const std::string front_path = dir + "/front.csv";
  if (std::filesystem::exists(front_path)) {
    try {
      const std::vector<RunResult> results = detail::load_all_results(dir);
      std::vector<ParetoPoint> points;
      for (const RunResult& r : results)
        points.push_back({r.final_loss, r.config.run_id, regime_name(r.config.regime), 0.0});
      const std::vector<ParetoPoint> front = pareto_front(points);
      std::ifstream f(front_path);
      std::string line;
      std::getline(f, line);  // header
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto first_comma = line.find(',');
        const auto last_comma = line.rfind(',');
        const std::string run_id = line.substr(0, first_comma);
        const bool flagged = line.substr(last_comma + 1) == "1";
        bool actual = false;
        for (const ParetoPoint& p : front) actual = actual || p.run_id == run_id;
        if (flagged != actual)
          problems.push_back("front.csv: on_front mismatch for " + run_id);
      }
    } catch (const std::exception& e) {
      problems.push_back(std::string("front.csv check failed: ") + e.what());
    }
  }
  return problems;
}

}  // namespace mtlab
