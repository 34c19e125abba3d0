#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flowuq/commands.hpp"
#include "flowuq/config.hpp"

using namespace flowuq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) { return cli::run(args); }

// Small but complete run configuration for fast end-to-end commands.
fs::path write_tiny_config(const fs::path& dir) {
  config::RunConfig rc;
  rc.generate.nx = 21;
  rc.generate.nt = 81;
  rc.train.iterations = 3;
  rc.train.m = 16;
  rc.train.n_omega = 2;
  rc.train.t_window = 12;
  rc.model.flow.pnet_width = 8;
  rc.model.flow.pnet_depth = 1;
  rc.model.flow.coupling_layers = 2;
  rc.model.flow.coupling_width = 8;
  rc.model.physics.snet_width = 8;
  rc.eval.samples = 40;
  rc.eval.data_samples = 40;
  const fs::path p = dir / "config.json";
  std::ofstream(p) << config::to_json(rc).dump(2);
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}) == cli::kExitConfig);
  CHECK(run({"bogus"}) == cli::kExitConfig);
  CHECK(run({"eval"}) == cli::kExitConfig);
  CHECK(run({"generate", "--nx", "abc"}) == cli::kExitConfig);
  CHECK(run({"--help"}) == cli::kExitOk);
}

TEST_CASE("generate is deterministic and reports conservation") {
  TempDir d("flowuq_cli_generate");
  const std::vector<std::string> base{"generate", "--nx", "21", "--nt", "81", "--seed", "5"};
  auto with_out = [&](const std::string& sub) {
    auto a = base;
    a.insert(a.end(), {"--out", (d.path / sub).string()});
    return a;
  };
  REQUIRE(run(with_out("a")) == cli::kExitOk);
  REQUIRE(run(with_out("b")) == cli::kExitOk);
  CHECK(fs::exists(d.path / "a" / "dataset.json"));
  CHECK(fs::exists(d.path / "a" / "dataset.csv"));
  CHECK(slurp(d.path / "a" / "dataset.json") == slurp(d.path / "b" / "dataset.json"));
  CHECK(slurp(d.path / "a" / "dataset.csv") == slurp(d.path / "b" / "dataset.csv"));
}

TEST_CASE("generate failures map to exit codes") {
  TempDir d("flowuq_cli_generate_bad");
  const std::string out = (d.path / "x").string();
  CHECK(run({"generate", "--nx", "241", "--nt", "60", "--out", out}) == cli::kExitNumerical);
  CHECK(run({"generate", "--noise", "-1", "--out", out}) == cli::kExitConfig);
  CHECK(run({"generate", "--tau", "0", "--out", out}) == cli::kExitConfig);
}

TEST_CASE("config files reject unknown keys and bad values") {
  TempDir d("flowuq_cli_config");
  const fs::path bad = d.path / "bad.json";
  std::ofstream(bad) << R"({"train": {"alpha": 1.0, "alpah": 0.5}})";
  CHECK(run({"--config", bad.string(), "generate", "--out", (d.path / "o").string()}) ==
        cli::kExitConfig);
  std::ofstream(bad) << R"({"train": {"m": -4}})";
  CHECK(run({"--config", bad.string(), "generate", "--out", (d.path / "o").string()}) ==
        cli::kExitConfig);
  std::ofstream(bad) << R"({"model": {"physics": {"family": "burgers"}}})";
  CHECK(run({"--config", bad.string(), "generate", "--out", (d.path / "o").string()}) ==
        cli::kExitConfig);
  std::ofstream(bad) << "{ not json";
  CHECK(run({"--config", bad.string(), "generate", "--out", (d.path / "o").string()}) ==
        cli::kExitConfig);
  CHECK(run({"--config", (d.path / "missing.json").string(), "generate"}) == cli::kExitConfig);
}

TEST_CASE("config round trip") {
  config::RunConfig rc;
  rc.train.gamma = 0.3;
  rc.model.physics.family = physics::Family::lwr;
  rc.model.critic.lipschitz = critic::Lipschitz::clip;
  rc.loop_rows = {1, 5};
  config::RunConfig back;
  config::from_json(config::to_json(rc), back);
  CHECK(config::to_json(back) == config::to_json(rc));
}

TEST_CASE("train, eval, sample and fd-curve end to end") {
  TempDir d("flowuq_cli_e2e");
  const std::string cfg = write_tiny_config(d.path).string();
  const std::string data = (d.path / "dataset.json").string();
  const std::string out = (d.path / "run").string();
  REQUIRE(run({"--config", cfg, "--out", d.path.string(), "generate"}) == cli::kExitOk);

  SUBCASE("all-zero loss weights are rejected") {
    CHECK(run({"--config", cfg, "--data", data, "--out", out, "train", "--alpha", "0", "--beta",
               "0", "--gamma", "0"}) == cli::kExitConfig);
  }
  SUBCASE("missing dataset") {
    CHECK(run({"--config", cfg, "--data", (d.path / "nope.json").string(), "--out", out,
               "train"}) == cli::kExitConfig);
  }
  SUBCASE("full pipeline") {
    REQUIRE(run({"--config", cfg, "--data", data, "--out", out, "train"}) == cli::kExitOk);
    const std::string ckpt = (d.path / "run" / "checkpoint.json").string();
    CHECK(fs::exists(d.path / "run" / "loss_history.csv"));

    REQUIRE(run({"--config", cfg, "--data", data, "--out", out, "eval", "--checkpoint", ckpt}) ==
            cli::kExitOk);
    const auto report = nlohmann::json::parse(slurp(d.path / "run" / "eval_report.json"));
    CHECK(report.contains("re_rho"));
    CHECK(report.contains("kl_u"));
    CHECK(report.contains("coverage"));

    const std::string samples = (d.path / "s.csv").string();
    REQUIRE(run({"--out", out, "sample", "--checkpoint", ckpt, "--x", "0.5", "--t", "1.0", "-n",
                 "3", "--output", samples}) == cli::kExitOk);
    std::ifstream in(samples);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,t,sample_idx,rho,u");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);

    REQUIRE(run({"--out", out, "sample", "--checkpoint", ckpt, "--x", "0.5", "--t", "1.0", "-n",
                 "0", "--output", samples}) == cli::kExitOk);
    CHECK(slurp(samples) == "x,t,sample_idx,rho,u\n");

    CHECK(run({"--out", out, "sample", "--checkpoint", ckpt, "--x", "0.5", "--output",
               samples}) == cli::kExitConfig);

    const std::string curve = (d.path / "fd.csv").string();
    REQUIRE(run({"--data", data, "--out", out, "fd-curve", "--checkpoint", ckpt, "--output",
                 curve}) == cli::kExitOk);
    std::ifstream fc(curve);
    std::getline(fc, line);
    CHECK(line == "rho,u_eq_hat,u_eq_true");
    rows = 0;
    while (std::getline(fc, line)) ++rows;
    CHECK(rows == 91);

    REQUIRE(run({"--config", cfg, "--data", data, "--out", out, "train", "--resume", ckpt,
                 "--iters", "5"}) == cli::kExitOk);
    CHECK(run({"--config", cfg, "--data", data, "--out", out, "eval", "--checkpoint",
               (d.path / "none.json").string()}) == cli::kExitConfig);
  }
}

TEST_CASE("the executable reports exit codes") {
  const char* exe = std::getenv("FLOWUQ_CLI");
  if (!exe) {
    MESSAGE("FLOWUQ_CLI not set; skipping process-level checks");
    return;
  }
  auto status = [&](const std::string& args) {
    const int rc = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  CHECK(status("") == 2);
  CHECK(status("--help") == 0);
  CHECK(status("eval --checkpoint /nonexistent/ckpt.json") == 2);
}
