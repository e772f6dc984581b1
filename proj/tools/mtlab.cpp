// Experiment front-end: plan sweeps, run them on a worker pool, emit CSV/SVG
// artifacts and re-verify stored results.
//
// Exit codes: 0 success, 1 partial run failures (or failed verification),
// 2 invalid input.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "mtlab/sweep.hpp"

namespace {

int cmd_plan(const std::string& sweep_file) {
  const mtlab::SweepPlan plan = mtlab::load_sweep_file(sweep_file);
  const auto configs = plan.enumerate();
  for (const mtlab::RunConfig& c : configs)
    std::printf("%s  regime=%s N=%ld N1=%ld seed=%llu\n", c.run_id.c_str(),
                mtlab::regime_name(c.regime), c.total_steps, c.pretrain_steps,
                static_cast<unsigned long long>(c.seed));
  std::printf("total: %zu runs\n", configs.size());
  return 0;
}

int cmd_run(const std::string& sweep_file, const std::string& out_dir, int parallelism) {
  const mtlab::SweepPlan plan = mtlab::load_sweep_file(sweep_file);
  const mtlab::ExecReport report = mtlab::execute_plan(plan, out_dir, parallelism);
  std::printf("completed=%d skipped=%d failed=%d\n", report.completed, report.skipped,
              report.failed);
  for (const std::string& f : report.failures) std::printf("failure: %s\n", f.c_str());
  return report.failed > 0 ? 1 : 0;
}

int cmd_emit(const std::string& dir, bool front, bool efficiency, bool curves, int task) {
  if (!front && !efficiency && !curves)
    throw CLI::ValidationError("emit", "choose at least one of --front/--efficiency/--curves");
  if (front) {
    mtlab::emit_front(dir);
    std::printf("wrote %s/front.csv and front.svg\n", dir.c_str());
  }
  if (efficiency) {
    mtlab::emit_efficiency(dir, task);
    std::printf("wrote %s/efficiency_<run>.csv and efficiency.svg\n", dir.c_str());
  }
  if (curves) {
    mtlab::emit_curves(dir);
    std::printf("wrote %s/curves_<run>.csv\n", dir.c_str());
  }
  return 0;
}

int cmd_verify(const std::string& dir) {
  const auto problems = mtlab::verify_results(dir);
  if (problems.empty()) {
    std::printf("ok: all stored results satisfy the invariants\n");
    return 0;
  }
  for (const std::string& p : problems) std::printf("violation: %s\n", p.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtlab - multi-task training laboratory"};
  app.require_subcommand(1);

  std::string sweep_file, out_dir = "results", results_dir;
  int parallelism = 1, task = -1;
  bool front = false, efficiency = false, curves = false;

  CLI::App* plan = app.add_subcommand("plan", "enumerate the runs of a sweep file");
  plan->add_option("sweep", sweep_file, "sweep description file")->required();

  CLI::App* run = app.add_subcommand("run", "execute a sweep (resumable)");
  run->add_option("sweep", sweep_file, "sweep description file")->required();
  run->add_option("--out", out_dir, "output directory for result files");
  run->add_option("--parallel", parallelism, "worker pool size")->check(CLI::PositiveNumber);

  CLI::App* emit = app.add_subcommand("emit", "write CSV/SVG artifacts from results");
  emit->add_option("dir", results_dir, "results directory")->required();
  emit->add_flag("--front", front, "trade-off front table and scatter plot");
  emit->add_flag("--efficiency", efficiency, "examples-seen vs loss curves");
  emit->add_flag("--curves", curves, "full per-run loss curves");
  emit->add_option("--task", task, "task id for efficiency curves (default: low-resource)");

  CLI::App* verify = app.add_subcommand("verify", "re-check invariants over stored results");
  verify->add_option("dir", results_dir, "results directory")->required();

  try {
    app.parse(argc, argv);
    if (plan->parsed()) return cmd_plan(sweep_file);
    if (run->parsed()) return cmd_run(sweep_file, out_dir, parallelism);
    if (emit->parsed()) return cmd_emit(results_dir, front, efficiency, curves, task);
    if (verify->parsed()) return cmd_verify(results_dir);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
