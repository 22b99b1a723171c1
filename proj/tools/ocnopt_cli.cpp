// Command-line front end: train/resume runs, the verification claims
// table, benchmarking, metrics summaries and synthetic dataset export.
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocnopt/config.hpp"
#include "ocnopt/data.hpp"
#include "ocnopt/train.hpp"
#include "ocnopt/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitDiverged = 3;

void apply_thread_env() {
  if (const char* env = std::getenv("OCNOPT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

int run_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& resume_path, bool quiet) {
  const ocnopt::TrainConfig cfg = ocnopt::load_config(config_path, overrides);
  const ocnopt::TrainResult res =
      resume_path.empty() ? ocnopt::train(cfg)
                          : ocnopt::train_resume(cfg, resume_path);
  if (!quiet) {
    std::printf("steps            %llu\n",
                static_cast<unsigned long long>(res.steps));
    std::printf("final train loss %.6g\n", res.final_train_loss);
    std::printf("train accuracy   %.6g\n", res.train_accuracy);
    std::printf("val accuracy     %.6g\n", res.val_accuracy);
    std::printf("test accuracy    %.6g\n", res.test_accuracy);
    if (cfg.ode.enabled)
      std::printf("final horizon    %.6g\n", res.final_horizon);
    std::printf("metrics          %s\n", cfg.metrics_path.c_str());
    std::printf("checkpoint       %s\n", cfg.checkpoint_path.c_str());
    std::printf("manifest         %s\n", cfg.manifest_path.c_str());
  }
  return kExitOk;
}

int run_bench(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  const ocnopt::TrainConfig cfg = ocnopt::load_config(config_path, overrides);
  const ocnopt::TrainResult res = ocnopt::train(cfg);
  const double secs = res.wall_ms / 1000.0;
  std::printf("steps      %llu\n", static_cast<unsigned long long>(res.steps));
  std::printf("wall       %.3f s\n", secs);
  std::printf("steps/s    %.2f\n",
              secs > 0.0 ? double(res.steps) / secs : 0.0);
  std::printf("train loss %.6g\n", res.final_train_loss);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"layer-wise trajectory optimization for deep networks"};
  app.require_subcommand(1);

  std::string config_path, resume_path, level = "fast";
  std::vector<std::string> overrides;
  bool quiet = false;

  CLI::App* train = app.add_subcommand("train", "run a training job");
  train->add_option("config", config_path, "JSON config file")->required();
  train->add_option("--set", overrides,
                    "dotted config override, e.g. --set eta=0.05");
  train->add_option("--resume", resume_path, "checkpoint to continue from");
  train->add_flag("--quiet", quiet, "suppress the final summary");

  CLI::App* verify =
      app.add_subcommand("verify", "run the equivalence claims table");
  verify->add_option("--level", level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));

  CLI::App* bench =
      app.add_subcommand("bench", "time a training run end to end");
  bench->add_option("config", config_path, "JSON config file")->required();
  bench->add_option("--set", overrides, "dotted config override");

  std::string metrics_path;
  CLI::App* plot =
      app.add_subcommand("plot", "summarize a metrics file as JSON");
  plot->add_option("metrics", metrics_path, "metrics CSV file")->required();

  std::string kind = "two-moons", out_path;
  ocnopt::Index n = 400;
  double noise = 0.1;
  std::uint64_t seed = 1;
  CLI::App* gen =
      app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  gen->add_option("kind", kind,
                  "two-moons, circles, spirals, linear-regression, digits")
      ->required();
  gen->add_option("out", out_path, "output CSV path")->required();
  gen->add_option("--n", n, "sample count");
  gen->add_option("--noise", noise, "noise level");
  gen->add_option("--seed", seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed())
      return run_train(config_path, overrides, resume_path, quiet);
    if (bench->parsed()) return run_bench(config_path, overrides);
    if (verify->parsed()) {
      const ocnopt::VerifyReport report = ocnopt::run_verification(
          level == "full" ? ocnopt::VerifyLevel::Full
                          : ocnopt::VerifyLevel::Fast);
      std::fputs(ocnopt::verify_report_text(report).c_str(), stdout);
      return report.all_pass ? kExitOk : kExitVerifyFailed;
    }
    if (plot->parsed()) {
      std::fputs(ocnopt::metrics_summary_json(metrics_path).c_str(), stdout);
      return kExitOk;
    }
    if (gen->parsed()) {
      const ocnopt::Dataset ds = ocnopt::make_synthetic(kind, n, noise, seed);
      ocnopt::write_csv(ds, out_path);
      std::printf("wrote %lld samples to %s\n",
                  static_cast<long long>(ds.size()), out_path.c_str());
      return kExitOk;
    }
  } catch (const ocnopt::divergence_error& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
