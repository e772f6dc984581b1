#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mtlab/sweep.hpp"

namespace {

std::string cli_binary() {
  const char* bin = std::getenv("MTLAB_CLI_BIN");
  if (bin && *bin) return bin;
  return "./tools/mtlab";  // build-tree fallback
}

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = cli_binary() + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

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

void write_inputs(const TempDir& dir) {
  std::ofstream(dir.path / "pair.tasks")
      << "task\nid = 0\nkind = copy\ntrain_size = 100\neval_size = 10\nmin_len = 2\n"
         "max_len = 4\nvocab_lo = 3\nvocab_hi = 11\nseed = 81\ntarget_noise = 0\nend\n"
         "task\nid = 1\nkind = reverse\ntrain_size = 25\neval_size = 10\nmin_len = 2\n"
         "max_len = 4\nvocab_lo = 3\nvocab_hi = 11\nseed = 82\ntarget_noise = 0.2\nend\n";
  std::ofstream(dir.path / "sweep.cfg")
      << "[base]\nregime = static\ntasks_file = pair.tasks\ntotal_steps = 6\n"
         "batch_size = 4\nseed = 3\neval_every = 3\npeak_lr = 2e-3\nwarmup_steps = 2\n"
         "w_low = 0.5\nencoder_layers = 1\ndecoder_layers = 1\nmodel_dim = 8\nff_dim = 16\n"
         "heads = 2\nqkv_dim = 8\nmax_len = 8\neval_batch_size = 16\n"
         "[axes]\nw_low = 0.3,0.7\n";
}

}  // namespace

TEST_CASE("plan, run, emit and verify drive end to end", "[cli]") {
  TempDir dir("mtlab_cli_e2e");
  write_inputs(dir);
  const std::string sweep = dir.str() + "/sweep.cfg";
  const std::string out = dir.str() + "/results";
  const std::string log = dir.str() + "/log.txt";

  REQUIRE(run_cli("plan " + sweep, log) == 0);
  const std::string plan_output = slurp(log);
  REQUIRE(plan_output.find("total: 2 runs") != std::string::npos);
  REQUIRE(plan_output.find("static_w0.3") != std::string::npos);

  REQUIRE(run_cli("run " + sweep + " --parallel 2 --out " + out, log) == 0);
  REQUIRE(slurp(log).find("completed=2") != std::string::npos);

  // idempotent rerun skips both
  REQUIRE(run_cli("run " + sweep + " --parallel 1 --out " + out, log) == 0);
  REQUIRE(slurp(log).find("skipped=2") != std::string::npos);

  REQUIRE(run_cli("emit " + out + " --front --efficiency --curves", log) == 0);
  REQUIRE(std::filesystem::exists(out + "/front.csv"));
  REQUIRE(std::filesystem::exists(out + "/front.svg"));

  REQUIRE(run_cli("verify " + out, log) == 0);
  REQUIRE(slurp(log).find("ok:") != std::string::npos);
}

TEST_CASE("invalid input exits with code 2", "[cli]") {
  TempDir dir("mtlab_cli_bad");
  const std::string log = dir.str() + "/log.txt";
  REQUIRE(run_cli("plan " + dir.str() + "/missing.cfg", log) == 2);

  std::ofstream(dir.path / "broken.cfg") << "[base]\nregime = nonsense\n";
  REQUIRE(run_cli("plan " + dir.str() + "/broken.cfg", log) == 2);

  REQUIRE(run_cli("emit " + dir.str() + " --front", log) == 2);
  REQUIRE(run_cli("frobnicate", log) == 2);
}

TEST_CASE("verify flags corrupted results with exit code 1", "[cli]") {
  TempDir dir("mtlab_cli_verify");
  write_inputs(dir);
  const std::string out = dir.str() + "/results";
  const std::string log = dir.str() + "/log.txt";
  REQUIRE(run_cli("run " + dir.str() + "/sweep.cfg --out " + out, log) == 0);

  // truncate one result: drop its final record
  std::string victim;
  for (const auto& e : std::filesystem::directory_iterator(out))
    if (e.path().extension() == ".jsonl") victim = e.path().string();
  const std::string content = slurp(victim);
  const auto marker = content.find("\"type\":\"final\"");
  REQUIRE(marker != std::string::npos);
  const auto line_start = content.rfind('\n', marker);
  std::ofstream(victim, std::ios::trunc) << content.substr(0, line_start + 1);

  REQUIRE(run_cli("verify " + out, log) == 1);
  REQUIRE(slurp(log).find("violation") != std::string::npos);
}
