// ising: command-line driver for the verification suite and Monte Carlo experiments.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>

#include "CLI11.hpp"
#include "ising/experiment.hpp"

using namespace ising;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, check_failed = 1, usage = 2, nothing_ran = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool out_given = false;
  int threads = 1;
  std::string profile = "quick";
};

class Logger {
 public:
  void open(const std::string& dir) {
    fs::create_directories(dir);
    file_.open(fs::path(dir) / "run.log", std::ios::app);
  }
  void operator()(const std::string& msg) {
    std::lock_guard lock(mu_);
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&now));
    std::cerr << "[" << stamp << "] " << msg << "\n";
    if (file_) file_ << "[" << stamp << "] " << msg << std::endl;
  }

 private:
  std::mutex mu_;
  std::ofstream file_;
};

Logger logger;

RunOptions run_options(const Common& c) {
  logger.open(c.out);
  return {c.threads, c.out, [](const std::string& s) { logger(s); }};
}

// built-in configurations used when --config is absent
ExperimentConfig builtin(const std::string& command, const std::string& profile) {
  ExperimentConfig c;
  c.experiment_id = command + "-" + profile;
  if (command == "scan") {
    if (profile == "full") {
      c.dimension = 4;
      c.radii = {3, 4, 5, 6, 7, 8};
      c.periodic_contrast = true;
      c.schedule.n_samples = 4000;
      c.schedule.burn_in = 400;
    } else {
      c.dimension = 2;
      c.radii = {2, 4, 8};
      c.schedule.n_samples = 4000;
      c.schedule.burn_in = 200;
    }
  } else {
    c.dimension = 2;
    c.tilt_side = 8;
    c.schedule.n_samples = profile == "full" ? 100000 : 20000;
    c.schedule.burn_in = 500;
  }
  c.schedule.sampler = Sampler::hybrid;
  return c;
}

ExperimentConfig load_config(Common& c, const std::string& command) {
  ExperimentConfig cfg = c.config.empty() ? builtin(command, c.profile) : ExperimentConfig::load(c.config);
  if (c.seed) cfg.schedule.seed = *c.seed;
  if (!c.out_given && !cfg.output.empty()) c.out = cfg.output;
  cfg.validate();
  return cfg;
}

void write_manifest(const Common& c, const std::string& command, const nlohmann::json& extra) {
  nlohmann::json m{{"command", command},
                   {"profile", c.profile},
                   {"config_file", c.config},
                   {"threads", c.threads},
                   {"finished_unix", static_cast<long long>(std::time(nullptr))}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream(fs::path(c.out) / "manifest.json") << m.dump(2) << "\n";
}

int cmd_verify(const Common& c, bool corrupt) {
  VerifyOptions opt;
  opt.profile = verify_profile_from_string(c.profile);
  opt.corrupt_weights = corrupt;
  opt.seed = c.seed.value_or(1);
  const auto report = run_verify(opt, run_options(c));
  for (const auto& chk : report.checks) {
    const std::string status = chk["pass"].is_null() ? "SKIP" : (chk["pass"].get<bool>() ? "ok  " : "FAIL");
    std::cout << status << " " << chk["check"].get<std::string>() << "  " << chk["instance"].get<std::string>()
              << "\n";
  }
  std::cout << "passed " << report.passed << ", failed " << report.failed << ", skipped " << report.skipped << "\n";
  write_manifest(c, "verify", {{"seed", opt.seed}, {"summary", report.to_json()["summary"]}});
  if (report.passed + report.failed == 0) {
    std::cerr << "verify: nothing ran\n";
    return nothing_ran;
  }
  return report.ok() ? ok : check_failed;
}

void print_rows(const std::vector<ResultRow>& rows) {
  std::cout << csv_header() << "\n";
  for (const auto& r : rows) std::cout << to_csv_line(r) << "\n";
}

int cmd_scan(Common& c) {
  const auto cfg = load_config(c, "scan");
  const auto rec = run_scan(cfg, run_options(c));
  print_rows(rec.rows);
  std::cout << "fits: " << rec.report["fits"].dump() << "\n";
  write_manifest(c, "scan", {{"config_hash", rec.config_hash}, {"partial", rec.partial},
                             {"wall_clock_seconds", rec.wall_clock_seconds}});
  if (rec.partial) std::cerr << "scan: time limit reached, results are partial\n";
  return ok;
}

int cmd_tilt(Common& c) {
  const auto cfg = load_config(c, "tilt");
  const auto rec = run_tilt_experiment(cfg, run_options(c));
  for (const auto& cmp : rec.report["comparisons"]) {
    std::printf("h=%-6g %-11s mean z=%6.2f  var z=%6.2f  ess=%.0f%s\n", cmp["h"].get<double>(),
                cmp["test_function"].get<std::string>().c_str(), cmp["mean"]["z"].get<double>(),
                cmp["variance"]["z"].get<double>(), cmp["ess"].get<double>(),
                cmp["reliable"].get<bool>() ? "" : "  (low ESS)");
  }
  std::cout << "agree within 3 sigma: " << rec.report["agree_within_3sigma"] << "/"
            << rec.report["comparisons_total"] << "\n";
  write_manifest(c, "tilt", {{"config_hash", rec.config_hash}, {"wall_clock_seconds", rec.wall_clock_seconds}});
  return ok;
}

int cmd_fit(const Common& c, FitRequest req) {
  req.out_dir = c.out;
  const auto j = run_fit(req);
  std::cout << j.dump(2) << "\n";
  fs::create_directories(c.out);
  std::ofstream(fs::path(c.out) / "fit.json") << j.dump(2) << "\n";
  return ok;
}

int cmd_selftest(const Common& c) {
  const RunOptions run = run_options(c);
  int failures = 0;
  auto report = [&](const std::string& name, bool pass) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << "\n";
    failures += !pass;
  };

  const auto v = run_verify({VerifyProfile::quick, false, c.seed.value_or(1)}, {});
  report("exact identities (quick suite)", v.ok());

  VerifyReport neg;
  verify_switching_suite(neg, VerifyProfile::quick, true);
  report("corrupted weights are detected", neg.failed > 0);

  // d = 1 chain has <s_0 s_n> = tanh(beta)^n
  ExperimentConfig cfg;
  cfg.experiment_id = "selftest";
  cfg.dimension = 1;
  cfg.radii = {1, 2, 3};
  cfg.beta = 0.6;
  cfg.schedule.n_samples = 20000;
  cfg.schedule.seed = c.seed.value_or(1);
  const auto rec = run_scan(cfg, {c.threads, "", run.log});
  bool chain_ok = true;
  for (const auto& r : rec.rows)
    if (r.observable == "two_point")
      chain_ok = chain_ok && std::abs(r.value - std::pow(std::tanh(0.6), r.n)) < 4.5 * r.std_error;
  report("Monte Carlo chain correlations", chain_ok);

  write_manifest(c, "selftest", {{"failures", failures}});
  return failures == 0 ? ok : check_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ising model random-current verification and Monte Carlo experiments"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--profile", common.profile, "quick|full (verify also accepts empty)")
        ->check(CLI::IsMember({"quick", "full", "empty"}))
        ->capture_default_str();
  };

  bool corrupt = false;
  auto* verify = app.add_subcommand("verify", "exact checks of the random-current identities on small graphs");
  add_common(verify, false);
  verify->add_flag("--corrupt-weights", corrupt, "negative control")->group("");

  auto* scan = app.add_subcommand("scan", "two-point function and susceptibility over box radii");
  add_common(scan, true);
  auto* tilt = app.add_subcommand("tilt", "reweighted vs direct near-critical field runs");
  add_common(tilt, true);

  FitRequest req;
  auto* fit = app.add_subcommand("fit", "power-law fit of a results file");
  add_common(fit, false);
  fit->add_option("--input", req.files, "results CSV files")->required()->check(CLI::ExistingFile);
  fit->add_option("--observable", req.observable, "observable to fit when files hold several");
  fit->add_option("--min-n", req.min_n, "smallest n used");
  fit->add_option("--max-n", req.max_n, "largest n used (0: no bound)");

  auto* selftest = app.add_subcommand("selftest", "short end-to-end check");
  add_common(selftest, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    for (auto* sub : app.get_subcommands())
      common.out_given = common.out_given || sub->count("--out") > 0;
    if (common.profile == "empty" && !verify->parsed()) throw std::invalid_argument("profile 'empty' is only for verify");
    if (verify->parsed()) return cmd_verify(common, corrupt);
    if (scan->parsed()) return cmd_scan(common);
    if (tilt->parsed()) return cmd_tilt(common);
    if (fit->parsed()) return cmd_fit(common, req);
    if (selftest->parsed()) return cmd_selftest(common);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return check_failed;
  }
  return usage;
}
