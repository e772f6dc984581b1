#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "mtlab/sweep.hpp"

using namespace mtlab;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string tiny_tasks_text() {
  return "task\nid = 0\nkind = copy\ntrain_size = 120\neval_size = 12\nmin_len = 2\n"
         "max_len = 4\nvocab_lo = 3\nvocab_hi = 11\nseed = 71\ntarget_noise = 0\nend\n"
         "task\nid = 1\nkind = token_remap\ntrain_size = 30\neval_size = 12\nmin_len = 2\n"
         "max_len = 4\nvocab_lo = 3\nvocab_hi = 11\nseed = 72\ntarget_noise = 0.3\nend\n";
}

std::string tiny_sweep_text(const std::string& regime, const std::string& extra = "") {
  return "[base]\nregime = " + regime +
         "\ntasks_file = pair.tasks\ntotal_steps = 8\npretrain_steps = 4\n"
         "batch_size = 4\nseed = 5\neval_every = 4\npeak_lr = 2e-3\nwarmup_steps = 2\n"
         "finetune_warmup_steps = 1\nw_low = 0.5\nencoder_layers = 1\ndecoder_layers = 1\n"
         "model_dim = 8\nff_dim = 16\nheads = 2\nqkv_dim = 8\nmax_len = 8\n"
         "eval_batch_size = 16\n" +
         extra;
}

SweepPlan plan_from(const TempDir& dir, const std::string& sweep_text) {
  std::ofstream(dir.path / "pair.tasks") << tiny_tasks_text();
  std::ofstream(dir.path / "sweep.cfg") << sweep_text;
  return load_sweep_file((dir.path / "sweep.cfg").string());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("a nine-point rate grid yields nine configs", "[sweep]") {
  TempDir dir("mtlab_sweep_grid");
  SweepPlan plan = plan_from(
      dir, tiny_sweep_text("static", "[axes]\nw_low = 0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9\n"));
  const auto configs = plan.enumerate();
  REQUIRE(configs.size() == 9);
  std::set<std::string> ids;
  for (const auto& c : configs) {
    ids.insert(c.run_id);
    REQUIRE(c.regime == Regime::static_weights);
    REQUIRE(c.total_steps == 8);
  }
  REQUIRE(ids.size() == 9);  // injective
  REQUIRE(configs[0].w_finetune[1] == Catch::Approx(0.1));
  REQUIRE(configs[8].w_finetune[1] == Catch::Approx(0.9));
}

TEST_CASE("empty axes produce exactly the base config", "[sweep]") {
  TempDir dir("mtlab_sweep_base");
  SweepPlan plan = plan_from(dir, tiny_sweep_text("static"));
  const auto configs = plan.enumerate();
  REQUIRE(configs.size() == 1);
  REQUIRE(configs[0].w_finetune[1] == Catch::Approx(0.5));
}

TEST_CASE("a pretraining-length axis keeps the total fixed", "[sweep]") {
  TempDir dir("mtlab_sweep_n1");
  SweepPlan plan = plan_from(dir, tiny_sweep_text("pretrain_joint_finetune",
                                                  "eval_every = 2\n[axes]\npretrain_steps = 2,4,6\n"));
  const auto configs = plan.enumerate();
  REQUIRE(configs.size() == 3);
  for (const auto& c : configs) {
    REQUIRE(c.total_steps == 8);
    REQUIRE(c.schedule_phase2.total_steps == c.total_steps - c.pretrain_steps);
  }
  REQUIRE(configs[0].pretrain_steps == 2);
  REQUIRE(configs[2].pretrain_steps == 6);
}

TEST_CASE("a pretraining-length axis can fix the finetune length instead", "[sweep]") {
  TempDir dir("mtlab_sweep_n1b");
  SweepPlan plan = plan_from(
      dir, tiny_sweep_text("pretrain_joint_finetune",
                           "[axes]\npretrain_steps = 4,8\npretrain_axis = fixed_finetune\n"));
  const auto configs = plan.enumerate();
  REQUIRE(configs.size() == 2);
  REQUIRE(configs[0].total_steps == 8);
  REQUIRE(configs[1].total_steps == 12);
  for (const auto& c : configs) REQUIRE(c.total_steps - c.pretrain_steps == 4);
}

TEST_CASE("unknown keys and malformed values are rejected", "[sweep]") {
  TempDir dir("mtlab_sweep_bad");
  std::ofstream(dir.path / "pair.tasks") << tiny_tasks_text();
  std::ofstream(dir.path / "sweep.cfg") << tiny_sweep_text("static", "mystery_key = 3\n");
  REQUIRE_THROWS_AS(load_sweep_file((dir.path / "sweep.cfg").string()),
                    std::invalid_argument);
  std::ofstream(dir.path / "sweep2.cfg")
      << tiny_sweep_text("static", "[axes]\nw_low = lots\n");
  REQUIRE_THROWS_AS(load_sweep_file((dir.path / "sweep2.cfg").string()),
                    std::invalid_argument);
}

TEST_CASE("temperature weights come from the task sizes", "[sweep]") {
  TempDir dir("mtlab_sweep_tau");
  SweepPlan plan = plan_from(dir, tiny_sweep_text("static", "tau = 3.33\n"));
  const auto p =
      empirical_distribution(std::vector<double>{120.0, 30.0});
  const auto q = temperature_distribution(p, 3.33);
  REQUIRE(plan.base.w_finetune[0] == Catch::Approx(q[0]).margin(1e-15));
  REQUIRE(plan.base.w_finetune[1] == Catch::Approx(q[1]).margin(1e-15));
}

TEST_CASE("seed offset environment variable shifts every seed", "[sweep]") {
  TempDir dir("mtlab_sweep_env");
  SweepPlan plan = plan_from(dir, tiny_sweep_text("static", "[axes]\nseeds = 1,2\n"));
  setenv(kSeedOffsetEnv, "100", 1);
  const auto shifted = plan.enumerate();
  unsetenv(kSeedOffsetEnv);
  const auto base = plan.enumerate();
  REQUIRE(shifted.size() == 2);
  REQUIRE(shifted[0].seed == base[0].seed + 100);
  REQUIRE(shifted[1].seed == base[1].seed + 100);
  REQUIRE(shifted[0].run_id != base[0].run_id);
}

TEST_CASE("execution is resumable and parallelism-invariant", "[sweep]") {
  TempDir dir("mtlab_sweep_exec");
  SweepPlan plan =
      plan_from(dir, tiny_sweep_text("static", "[axes]\nw_low = 0.3,0.6\nseeds = 1,2\n"));

  const std::string out1 = dir.str() + "/serial";
  ExecReport first = execute_plan(plan, out1, 1, /*quiet=*/true);
  REQUIRE(first.completed == 4);
  REQUIRE(first.failed == 0);

  // rerunning a finished plan performs zero new training
  ExecReport again = execute_plan(plan, out1, 1, true);
  REQUIRE(again.completed == 0);
  REQUIRE(again.skipped == 4);

  // a 2-worker pool reproduces every record; only wall time may differ
  const std::string out2 = dir.str() + "/parallel";
  ExecReport par = execute_plan(plan, out2, 2, true);
  REQUIRE(par.completed == 4);
  for (const auto& c : plan.enumerate()) {
    const std::string name = c.run_id + ".jsonl";
    RunResult a = load_run_result(out1 + "/" + name);
    RunResult b = load_run_result(out2 + "/" + name);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      REQUIRE(a.records[i].eval_loss == b.records[i].eval_loss);
      REQUIRE(a.records[i].train_pool_loss == b.records[i].train_pool_loss);
      REQUIRE(a.records[i].examples_seen == b.records[i].examples_seen);
      REQUIRE(a.records[i].lr == b.records[i].lr);
    }
    REQUIRE(a.final_loss == b.final_loss);
  }

  // emitted CSV artifacts are byte-identical across schedulers
  emit_front(out1);
  emit_front(out2);
  emit_curves(out1);
  emit_curves(out2);
  REQUIRE(slurp(out1 + "/front.csv") == slurp(out2 + "/front.csv"));
  for (const auto& c : plan.enumerate())
    REQUIRE(slurp(out1 + "/curves_" + c.run_id + ".csv") ==
            slurp(out2 + "/curves_" + c.run_id + ".csv"));
}

TEST_CASE("emitters write consistent artifacts and verify accepts them", "[sweep]") {
  TempDir dir("mtlab_sweep_emit");
  SweepPlan plan =
      plan_from(dir, tiny_sweep_text("static", "[axes]\nw_low = 0.2,0.5,0.8\n"));
  const std::string out = dir.str() + "/results";
  REQUIRE(execute_plan(plan, out, 2, true).completed == 3);

  emit_front(out);
  emit_efficiency(out);
  emit_curves(out);
  REQUIRE(std::filesystem::exists(out + "/front.csv"));
  REQUIRE(std::filesystem::exists(out + "/front.svg"));
  REQUIRE(std::filesystem::exists(out + "/efficiency.svg"));

  // front.csv rows marked on_front=1 agree with a direct call
  const auto results = [&] {
    std::vector<RunResult> rs;
    for (const auto& c : plan.enumerate()) rs.push_back(load_run_result(out + "/" + c.run_id + ".jsonl"));
    return rs;
  }();
  std::vector<ParetoPoint> pts;
  for (const auto& r : results)
    pts.push_back({r.final_loss, r.config.run_id, regime_name(r.config.regime), 0.0});
  const auto front = pareto_front(pts);
  std::set<std::string> front_ids;
  for (const auto& p : front) front_ids.insert(p.run_id);

  std::ifstream f(out + "/front.csv");
  std::string line;
  std::getline(f, line);
  REQUIRE(line.rfind("run_id,regime,w_low,loss_task_0,loss_task_1,on_front", 0) == 0);
  std::set<std::string> flagged;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::string id = line.substr(0, line.find(','));
    if (line.substr(line.rfind(',') + 1) == "1") flagged.insert(id);
  }
  REQUIRE(flagged == front_ids);

  for (const auto& c : plan.enumerate()) {
    REQUIRE(std::filesystem::exists(out + "/efficiency_" + c.run_id + ".csv"));
    REQUIRE(std::filesystem::exists(out + "/curves_" + c.run_id + ".csv"));
  }

  REQUIRE(verify_results(out).empty());

  // corrupt one file; verify must flag it
  {
    std::ofstream bad(out + "/" + plan.enumerate()[0].run_id + ".jsonl", std::ios::app);
    bad << "{\"type\":\"eval\",\"step\":9999,\"phase\":1,\"lr\":0,\"train_loss\":null,"
           "\"loss_task_0\":1,\"loss0_task_0\":1,\"train_pool_loss_0\":1,\"examples_task_0\":0,"
           "\"loss_task_1\":1,\"loss0_task_1\":1,\"train_pool_loss_1\":1,\"examples_task_1\":0}\n";
  }
  REQUIRE(!verify_results(out).empty());
}

TEST_CASE("single-run emit marks that run as the whole front", "[sweep]") {
  TempDir dir("mtlab_sweep_single");
  SweepPlan plan = plan_from(dir, tiny_sweep_text("static"));
  const std::string out = dir.str() + "/results";
  REQUIRE(execute_plan(plan, out, 1, true).completed == 1);
  emit_front(out);
  std::ifstream f(out + "/front.csv");
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  REQUIRE(row.substr(row.rfind(',') + 1) == "1");
}
