// bpmf_sim: run BER sweeps, summarize results files, run the test suites.
//
//   bpmf_sim run <config> [--workers N] [--out DIR]
//   bpmf_sim summarize <results> [--csv PATH]
//   bpmf_sim check [--acceptance]
//
// Exit codes: 0 success, 1 failed check or bad usage, 2 config error, 3 I/O error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "bpmf/config.hpp"
#include "bpmf/sweep.hpp"

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int cmd_run(const std::string& config_path, unsigned workers, const std::string& out_dir) {
  const auto cfg = bpmf::load_config(config_path);
  const auto out = bpmf::run_sweep(cfg, workers, out_dir);
  std::cout << bpmf::summary_csv(out.rows);
  std::cerr << "results: " << out.results.string() << "\nsummary: " << out.summary.string() << "\n";
  return 0;
}

int cmd_summarize(const std::string& results, const std::string& csv_path) {
  const auto csv = bpmf::summary_csv(bpmf::summarize(bpmf::read_results(results)));
  if (csv_path.empty()) std::cout << csv;
  else bpmf::write_text(csv_path, csv);
  return 0;
}

int cmd_check(bool with_acceptance) {
  const std::filesystem::path dir = BPMF_TEST_DIR;
  int failed = 0;
  std::vector<std::string> suites{"test_gmsg",     "test_phy",       "test_txchain",
                                  "test_receiver", "test_baselines", "test_harness"};
  if (with_acceptance) suites.push_back("acceptance");
  for (const auto& name : suites) {
    const auto exe = dir / name;
    if (!std::filesystem::exists(exe)) {
      std::cerr << "missing test binary " << exe.string() << "\n";
      return kExitIo;
    }
    std::cout << "== " << name << std::endl;
    const int rc = std::system(exe.string().c_str());
    if (rc != 0) ++failed;
  }
  std::cout << (failed ? "check: FAILED (" + std::to_string(failed) + " suites)" : std::string("check: ok")) << "\n";
  return failed ? kExitCheckFailed : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative MIMO-OFDM receiver simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", results_path, csv_path;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "run a BER/NMSE sweep");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory");

  auto* summarize = app.add_subcommand("summarize", "aggregate a results file to CSV");
  summarize->add_option("results", results_path, "results file")->required();
  summarize->add_option("--csv", csv_path, "write CSV here instead of stdout");

  bool with_acceptance = false;
  auto* check = app.add_subcommand("check", "run the oracle and property suites");
  check->add_flag("--acceptance", with_acceptance, "also run the acceptance criteria (slow)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(config_path, workers, out_dir);
    if (*summarize) return cmd_summarize(results_path, csv_path);
    if (*check) return cmd_check(with_acceptance);
  } catch (const bpmf::ConfigParse& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const bpmf::ConfigInvalid& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const bpmf::IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const bpmf::MalformedResults& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
