#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/graph.hpp"
#include "mtlab/model.hpp"
#include "mtlab/optim.hpp"
#include "mtlab/serialize.hpp"
#include "mtlab/tasks.hpp"

namespace mtlab {

enum class Regime { static_weights, pretrain_joint_finetune, restart, transfer_only };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::static_weights: return "static";
    case Regime::pretrain_joint_finetune: return "pretrain_joint_finetune";
    case Regime::restart: return "restart";
    case Regime::transfer_only: return "transfer_only";
  }
  throw std::invalid_argument("regime_name: unknown regime");
}

inline Regime regime_from(const std::string& s) {
  if (s == "static") return Regime::static_weights;
  if (s == "pretrain_joint_finetune") return Regime::pretrain_joint_finetune;
  if (s == "restart") return Regime::restart;
  if (s == "transfer_only") return Regime::transfer_only;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

inline bool is_two_phase(Regime r) {
  return r == Regime::pretrain_joint_finetune || r == Regime::transfer_only ||
         r == Regime::restart;
}

// One experiment. Static and restart use w_finetune for the whole run;
// two-phase regimes pre-train with the one-hot w_pretrain for pretrain_steps
// and then fine-tune on w_finetune (transfer_only requires it to be one-hot
// on a task other than the pre-training one). eval_every must divide
// total_steps, and pretrain_steps where applicable, so that the evaluation
// series covers both phase boundary and final step.
struct RunConfig {
  std::string run_id = "run";
  Regime regime = Regime::static_weights;
  std::vector<TaskSpec> tasks;
  long total_steps = 0;       // N
  long pretrain_steps = 0;    // N1
  WeightVector w_pretrain;
  WeightVector w_finetune;
  ScheduleSpec schedule_phase1;
  ScheduleSpec schedule_phase2;
  int batch_size = 0;
  ModelConfig model;
  std::uint64_t seed = 0;
  long eval_every = 0;
  int eval_batch_size = 64;
  std::string checkpoint_path;  // phase-boundary archive; empty = skip

  long finetune_steps() const { return total_steps - pretrain_steps; }

  int pretrain_task() const {
    for (std::size_t i = 0; i < w_pretrain.size(); ++i)
      if (w_pretrain[i] == 1.0) return static_cast<int>(i);
    throw std::invalid_argument("RunConfig: w_pretrain is not one-hot");
  }

  void validate() const {
    model.validate();
    if (tasks.empty()) throw std::invalid_argument("RunConfig: no tasks");
    for (const TaskSpec& t : tasks) t.validate();
    if (suite_vocab_size(tasks) > model.vocab_size)
      throw std::invalid_argument("RunConfig: model vocabulary smaller than task vocabulary");
    if (total_steps <= 0) throw std::invalid_argument("RunConfig: total_steps must be positive");
    if (batch_size <= 0) throw std::invalid_argument("RunConfig: batch_size must be positive");
    if (eval_every <= 0 || total_steps % eval_every != 0)
      throw std::invalid_argument("RunConfig: eval_every must divide total_steps");
    if (w_finetune.size() != tasks.size())
      throw std::invalid_argument("RunConfig: w_finetune size mismatch");
    schedule_phase1.validate();
    if (is_two_phase(regime)) {
      if (pretrain_steps < 0 || pretrain_steps >= total_steps)
        throw std::invalid_argument("RunConfig: two-phase regime needs 0 <= N1 < N");
      if (pretrain_steps % eval_every != 0)
        throw std::invalid_argument("RunConfig: eval_every must divide pretrain_steps");
      schedule_phase2.validate();
      if (schedule_phase2.kind == ScheduleSpec::Kind::warmup_cosine &&
          schedule_phase2.total_steps < finetune_steps())
        throw std::invalid_argument("RunConfig: phase-2 schedule shorter than phase 2");
    }
    if (regime == Regime::pretrain_joint_finetune || regime == Regime::transfer_only) {
      if (w_pretrain.size() != tasks.size())
        throw std::invalid_argument("RunConfig: w_pretrain size mismatch");
      (void)pretrain_task();  // throws unless one-hot
      if (regime == Regime::transfer_only) {
        int hot = -1;
        for (std::size_t i = 0; i < w_finetune.size(); ++i)
          if (w_finetune[i] > 0.0) hot = hot == -1 ? static_cast<int>(i) : -2;
        if (hot < 0 || w_finetune[static_cast<std::size_t>(hot)] != 1.0)
          throw std::invalid_argument("RunConfig: transfer_only needs one-hot w_finetune");
      }
    }
    const long phase1_len = is_two_phase(regime) ? pretrain_steps : total_steps;
    if (schedule_phase1.kind == ScheduleSpec::Kind::warmup_cosine &&
        schedule_phase1.total_steps < phase1_len)
      throw std::invalid_argument("RunConfig: phase-1 schedule shorter than phase 1");
  }
};

// Largest eval_every <= max(1, n/200) that divides n.
inline long default_eval_every(long n) {
  long target = std::max<long>(1, n / 200);
  while (target > 1 && n % target != 0) --target;
  return target;
}

struct EvalRecord {
  long step = 0;
  int phase = 1;
  double lr = 0.0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();  // mean since last record
  std::vector<double> eval_loss;             // per task, training-epsilon smoothed
  std::vector<double> eval_loss_unsmoothed;  // epsilon = 0 view of the same pass
  std::vector<double> train_pool_loss;       // smoothed loss on the train probe
  std::vector<long> examples_seen;           // exact cumulative counters
};

struct PhaseEvent {
  long step = 0;
  std::string what;
};

struct RunResult {
  RunConfig config;
  std::vector<EvalRecord> records;
  std::vector<PhaseEvent> events;
  std::vector<double> final_loss;
  std::vector<long> final_examples_seen;
  double wall_seconds = 0.0;
  long steps_run = 0;
};

// ---- evaluation -------------------------------------------------------------

namespace detail {

// Token-weighted mean losses over a fixed pool: (smoothed, unsmoothed).
inline std::pair<double, double> pool_loss(const ModelState& model, std::span<const Example> pool,
                                           double label_smoothing, std::size_t eval_batch,
                                           std::int32_t start_token = kBosId) {
  if (pool.empty()) throw std::invalid_argument("pool_loss: empty pool");
  double sum_s = 0.0, sum_u = 0.0;
  long tokens = 0;
  for (std::size_t begin = 0; begin < pool.size(); begin += eval_batch) {
    const std::size_t count = std::min(eval_batch, pool.size() - begin);
    Batch b = batch_from_pool(pool, begin, count, 0, start_token);
    Graph g;
    NodeId logits = build_transformer_logits(g, model, b.src, b.tgt_in, Mode::eval, nullptr);
    NodeId smoothed = sequence_loss(g, logits, b.tgt_out, label_smoothing);
    long n = 0;
    for (auto m : b.tgt_mask) n += m ? 1 : 0;
    sum_s += g.value(smoothed).data[0] * static_cast<double>(n);
    if (label_smoothing == 0.0) {
      sum_u = sum_s;
    } else {
      NodeId plain = sequence_loss(g, logits, b.tgt_out, 0.0);
      sum_u += g.value(plain).data[0] * static_cast<double>(n);
    }
    tokens += n;
  }
  return {sum_s / static_cast<double>(tokens), sum_u / static_cast<double>(tokens)};
}

}  // namespace detail

// Per-task mean token-level smoothed cross entropy on the eval sets.
// Deterministic: dropout off, fixed batch order.
inline std::vector<double> evaluate(const ModelState& model, std::span<const TaskDataset> tasks,
                                    double label_smoothing, std::size_t eval_batch = 64) {
  std::vector<double> out;
  out.reserve(tasks.size());
  for (const TaskDataset& t : tasks)
    out.push_back(detail::pool_loss(model, t.eval_set, label_smoothing, eval_batch,
                                    t.spec.start_token)
                      .first);
  return out;
}

// ---- the shared training engine ---------------------------------------------

namespace detail {

struct EngineState {
  ModelState model;
  AdamState optimizer;
  Rng sample_rng;
  Rng dropout_rng;
  long step = 0;
  std::vector<long> examples_seen;
  double loss_accum = 0.0;
  long loss_count = 0;
};

inline EngineState fresh_engine(const RunConfig& config) {
  EngineState s;
  s.model = ModelState::init(config.model, config.seed);
  s.optimizer = AdamState(s.model.params());
  s.sample_rng = Rng(config.seed, streams::sample);
  s.dropout_rng = Rng(config.seed, streams::dropout);
  s.examples_seen.assign(config.tasks.size(), 0);
  return s;
}

inline void record_eval(const RunConfig& config, std::span<const TaskDataset> datasets,
                        EngineState& s, int phase, double lr, RunResult& result) {
  EvalRecord rec;
  rec.step = s.step;
  rec.phase = phase;
  rec.lr = lr;
  if (s.loss_count > 0) rec.train_loss = s.loss_accum / static_cast<double>(s.loss_count);
  s.loss_accum = 0.0;
  s.loss_count = 0;
  const double eps = config.model.label_smoothing;
  const auto nb = static_cast<std::size_t>(config.eval_batch_size);
  for (const TaskDataset& t : datasets) {
    auto [smoothed, plain] = pool_loss(s.model, t.eval_set, eps, nb, t.spec.start_token);
    rec.eval_loss.push_back(smoothed);
    rec.eval_loss_unsmoothed.push_back(plain);
    rec.train_pool_loss.push_back(
        pool_loss(s.model, t.train_probe(), eps, nb, t.spec.start_token).first);
  }
  rec.examples_seen = s.examples_seen;
  result.records.push_back(std::move(rec));
}

// Runs steps [s.step, phase_end) of one phase. Evaluation happens on the
// eval_every grid, including the phase's final step when it lands on the grid.
inline void run_phase(const RunConfig& config, std::span<const TaskDataset> datasets,
                      EngineState& s, int phase, long phase_start, long phase_end,
                      const WeightVector& weights, const ScheduleSpec& schedule,
                      RunResult& result) {
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  while (s.step < phase_end) {
    const double lr = learning_rate(s.step - phase_start, schedule);
    Batch batch = next_batch(datasets, weights, batch_size, s.sample_rng);
    Graph g;
    std::vector<NodeId> param_nodes;
    NodeId logits = build_transformer_logits(g, s.model, batch.src, batch.tgt_in, Mode::train,
                                             &s.dropout_rng, &param_nodes);
    NodeId loss = sequence_loss(g, logits, batch.tgt_out, config.model.label_smoothing);
    g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(param_nodes.size());
    for (NodeId id : param_nodes) grads.push_back(g.grad(id));
    s.optimizer.step(s.model.params(), grads, lr);
    for (int t : batch.task_ids) ++s.examples_seen[static_cast<std::size_t>(t)];
    s.loss_accum += g.value(loss).data[0];
    ++s.loss_count;
    ++s.step;
    if (s.step % config.eval_every == 0)
      record_eval(config, datasets, s, phase, learning_rate(s.step - phase_start, schedule),
                  result);
  }
}

inline Json engine_extra(const RunConfig& config, const EngineState& s, int phase) {
  Json j;
  j["run_id"] = config.run_id;
  j["step"] = s.step;
  j["phase"] = phase;
  j["sample_rng"] = {s.sample_rng.key(), s.sample_rng.counter()};
  j["dropout_rng"] = {s.dropout_rng.key(), s.dropout_rng.counter()};
  j["examples_seen"] = s.examples_seen;
  return j;
}

inline void finish(RunResult& result, const EngineState& s,
                   std::chrono::steady_clock::time_point t0) {
  result.final_loss = result.records.back().eval_loss;
  result.final_examples_seen = s.examples_seen;
  result.steps_run = s.step;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Phase-2 weights per regime: static and restart keep w_finetune throughout,
// transfer shares the code path with the joint regime.
inline const WeightVector& phase1_weights(const RunConfig& c) {
  return (c.regime == Regime::pretrain_joint_finetune || c.regime == Regime::transfer_only)
             ? c.w_pretrain
             : c.w_finetune;
}

// A finished run together with its final model and optimizer state.
struct RunOutput {
  RunResult result;
  ModelState model;
  AdamState optimizer;
};

// Runs the configured regime end to end.
inline RunOutput run_regime_full(const RunConfig& config,
                                 std::span<const TaskDataset> datasets) {
  config.validate();
  if (datasets.size() != config.tasks.size())
    throw std::invalid_argument("run_regime: dataset count mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.config = config;
  detail::EngineState s = detail::fresh_engine(config);

  const bool two_phase = is_two_phase(config.regime);
  const long n1 = two_phase ? config.pretrain_steps : config.total_steps;

  detail::record_eval(config, datasets, s, 1, learning_rate(0, config.schedule_phase1), result);
  detail::run_phase(config, datasets, s, 1, 0, n1, phase1_weights(config),
                    config.schedule_phase1, result);

  if (two_phase) {
    result.events.push_back({s.step, "optimizer_reset_and_schedule_restart"});
    if (!config.checkpoint_path.empty())
      save_checkpoint(config.checkpoint_path, s.model, s.optimizer,
                      detail::engine_extra(config, s, 1));
    s.optimizer.reset();
    detail::run_phase(config, datasets, s, 2, n1, config.total_steps, config.w_finetune,
                      config.schedule_phase2, result);
  }
  detail::finish(result, s, t0);
  return {std::move(result), std::move(s.model), std::move(s.optimizer)};
}

inline RunResult run_regime(const RunConfig& config, std::span<const TaskDataset> datasets) {
  return run_regime_full(config, datasets).result;
}

// Phase 1 of a two-phase config, ending with the boundary checkpoint. The
// result carries the phase-1 evaluation series.
inline RunResult run_pretrain_phase(const RunConfig& config,
                                    std::span<const TaskDataset> datasets) {
  config.validate();
  if (!is_two_phase(config.regime))
    throw std::invalid_argument("run_pretrain_phase: config is not two-phase");
  if (config.checkpoint_path.empty())
    throw std::invalid_argument("run_pretrain_phase: checkpoint_path required");
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.config = config;
  detail::EngineState s = detail::fresh_engine(config);
  detail::record_eval(config, datasets, s, 1, learning_rate(0, config.schedule_phase1), result);
  detail::run_phase(config, datasets, s, 1, 0, config.pretrain_steps, phase1_weights(config),
                    config.schedule_phase1, result);
  result.events.push_back({s.step, "pretrain_phase_checkpoint"});
  save_checkpoint(config.checkpoint_path, s.model, s.optimizer,
                  detail::engine_extra(config, s, 1));
  detail::finish(result, s, t0);
  return result;
}

// Continues a two-phase run from its boundary checkpoint: optimizer reset,
// fresh phase-2 schedule, data stream resumed bit-exactly. The record series
// starts with the boundary evaluation, so together with the pretrain phase it
// reproduces the uninterrupted run.
inline RunResult run_finetune_from_checkpoint(const RunConfig& config,
                                              std::span<const TaskDataset> datasets,
                                              const std::string& checkpoint_path) {
  config.validate();
  if (!is_two_phase(config.regime))
    throw std::invalid_argument("run_finetune_from_checkpoint: config is not two-phase");
  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.extra.at("step").get<long>() != config.pretrain_steps)
    throw std::invalid_argument("run_finetune_from_checkpoint: checkpoint at step " +
                                ck.extra.at("step").dump() + ", expected " +
                                std::to_string(config.pretrain_steps));
  RunResult result;
  result.config = config;
  detail::EngineState s;
  s.model = std::move(ck.model);
  s.optimizer = std::move(ck.optimizer);
  const auto sr = ck.extra.at("sample_rng").get<std::vector<std::uint64_t>>();
  const auto dr = ck.extra.at("dropout_rng").get<std::vector<std::uint64_t>>();
  s.sample_rng.restore(sr.at(0), sr.at(1));
  s.dropout_rng.restore(dr.at(0), dr.at(1));
  s.step = config.pretrain_steps;
  s.examples_seen = ck.extra.at("examples_seen").get<std::vector<long>>();
  if (s.examples_seen.size() != config.tasks.size())
    throw std::invalid_argument("run_finetune_from_checkpoint: counter size mismatch");

  // boundary record mirrors the uninterrupted run's entry at this step
  detail::record_eval(config, datasets, s, 1,
                      learning_rate(config.pretrain_steps, config.schedule_phase1), result);
  result.events.push_back({s.step, "optimizer_reset_and_schedule_restart"});
  s.optimizer.reset();
  detail::run_phase(config, datasets, s, 2, config.pretrain_steps, config.total_steps,
                    config.w_finetune, config.schedule_phase2, result);
  detail::finish(result, s, t0);
  return result;
}

// Regime-specific entry points; thin validation wrappers over the shared loop.
inline RunResult run_static(const RunConfig& config, std::span<const TaskDataset> datasets) {
  if (config.regime != Regime::static_weights)
    throw std::invalid_argument("run_static: wrong regime");
  return run_regime(config, datasets);
}

inline RunResult run_pretrain_joint_finetune(const RunConfig& config,
                                             std::span<const TaskDataset> datasets) {
  if (config.regime != Regime::pretrain_joint_finetune)
    throw std::invalid_argument("run_pretrain_joint_finetune: wrong regime");
  return run_regime(config, datasets);
}

inline RunResult run_restart(const RunConfig& config, std::span<const TaskDataset> datasets) {
  if (config.regime != Regime::restart)
    throw std::invalid_argument("run_restart: wrong regime");
  return run_regime(config, datasets);
}

inline RunResult run_transfer_only(const RunConfig& config,
                                   std::span<const TaskDataset> datasets) {
  if (config.regime != Regime::transfer_only)
    throw std::invalid_argument("run_transfer_only: wrong regime");
  return run_regime(config, datasets);
}

inline std::vector<TaskDataset> generate_suite(std::span<const TaskSpec> specs) {
  std::vector<TaskDataset> out;
  out.reserve(specs.size());
  for (const TaskSpec& s : specs) out.push_back(generate_task(s));
  return out;
}

// ---- result persistence (JSON lines) ----------------------------------------

inline void to_json(Json& j, const RunConfig& c) {
  j = Json{{"run_id", c.run_id},
           {"regime", regime_name(c.regime)},
           {"tasks", c.tasks},
           {"total_steps", c.total_steps},
           {"pretrain_steps", c.pretrain_steps},
           {"w_pretrain", c.w_pretrain.size() ? Json(c.w_pretrain) : Json(nullptr)},
           {"w_finetune", c.w_finetune},
           {"schedule_phase1", c.schedule_phase1},
           {"schedule_phase2", c.schedule_phase2},
           {"batch_size", c.batch_size},
           {"model", c.model},
           {"seed", c.seed},
           {"eval_every", c.eval_every},
           {"eval_batch_size", c.eval_batch_size}};
}

inline void from_json(const Json& j, RunConfig& c) {
  j.at("run_id").get_to(c.run_id);
  c.regime = regime_from(j.at("regime").get<std::string>());
  c.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
  j.at("total_steps").get_to(c.total_steps);
  j.at("pretrain_steps").get_to(c.pretrain_steps);
  if (!j.at("w_pretrain").is_null()) c.w_pretrain = j.at("w_pretrain").get<WeightVector>();
  c.w_finetune = j.at("w_finetune").get<WeightVector>();
  c.schedule_phase1 = j.at("schedule_phase1").get<ScheduleSpec>();
  c.schedule_phase2 = j.at("schedule_phase2").get<ScheduleSpec>();
  j.at("batch_size").get_to(c.batch_size);
  c.model = j.at("model").get<ModelConfig>();
  j.at("seed").get_to(c.seed);
  j.at("eval_every").get_to(c.eval_every);
  j.at("eval_batch_size").get_to(c.eval_batch_size);
}

inline std::string run_result_to_jsonl(const RunResult& r) {
  std::ostringstream out;
  Json header;
  header["type"] = "config";
  header["config"] = r.config;
  out << header.dump() << "\n";
  const std::size_t k = r.config.tasks.size();
  for (const EvalRecord& rec : r.records) {
    Json j;
    j["type"] = "eval";
    j["step"] = rec.step;
    j["phase"] = rec.phase;
    j["lr"] = rec.lr;
    j["train_loss"] = std::isfinite(rec.train_loss) ? Json(rec.train_loss) : Json(nullptr);
    for (std::size_t i = 0; i < k; ++i) {
      const std::string suffix = std::to_string(i);
      j["loss_task_" + suffix] = rec.eval_loss[i];
      j["loss0_task_" + suffix] = rec.eval_loss_unsmoothed[i];
      j["train_pool_loss_" + suffix] = rec.train_pool_loss[i];
      j["examples_task_" + suffix] = rec.examples_seen[i];
    }
    out << j.dump() << "\n";
  }
  for (const PhaseEvent& ev : r.events) {
    Json j;
    j["type"] = "event";
    j["step"] = ev.step;
    j["what"] = ev.what;
    out << j.dump() << "\n";
  }
  Json fin;
  fin["type"] = "final";
  for (std::size_t i = 0; i < k; ++i) {
    fin["loss_task_" + std::to_string(i)] = r.final_loss[i];
    fin["examples_task_" + std::to_string(i)] = r.final_examples_seen[i];
  }
  fin["steps_run"] = r.steps_run;
  fin["wall_seconds"] = r.wall_seconds;
  out << fin.dump() << "\n";
  return out.str();
}

inline void save_run_result(const std::string& path, const RunResult& r) {
  atomic_write_text(path, run_result_to_jsonl(r));
}

inline RunResult load_run_result(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  RunResult r;
  std::string line;
  bool have_config = false;
  std::size_t k = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "config") {
      r.config = j.at("config").get<RunConfig>();
      k = r.config.tasks.size();
      have_config = true;
    } else if (type == "eval") {
      if (!have_config) throw std::runtime_error("result file: eval before config");
      EvalRecord rec;
      rec.step = j.at("step").get<long>();
      rec.phase = j.at("phase").get<int>();
      rec.lr = j.at("lr").get<double>();
      rec.train_loss = j.at("train_loss").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : j.at("train_loss").get<double>();
      for (std::size_t i = 0; i < k; ++i) {
        const std::string suffix = std::to_string(i);
        rec.eval_loss.push_back(j.at("loss_task_" + suffix).get<double>());
        rec.eval_loss_unsmoothed.push_back(j.at("loss0_task_" + suffix).get<double>());
        rec.train_pool_loss.push_back(j.at("train_pool_loss_" + suffix).get<double>());
        rec.examples_seen.push_back(j.at("examples_task_" + suffix).get<long>());
      }
      r.records.push_back(std::move(rec));
    } else if (type == "event") {
      r.events.push_back({j.at("step").get<long>(), j.at("what").get<std::string>()});
    } else if (type == "final") {
      for (std::size_t i = 0; i < k; ++i) {
        r.final_loss.push_back(j.at("loss_task_" + std::to_string(i)).get<double>());
        r.final_examples_seen.push_back(j.at("examples_task_" + std::to_string(i)).get<long>());
      }
      r.steps_run = j.at("steps_run").get<long>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
    } else {
      throw std::runtime_error("result file: unknown record type '" + type + "'");
    }
  }
  if (!have_config || r.records.empty())
    throw std::runtime_error("result file: missing config or records in " + path);
  return r;
}

}  // namespace mtlab
