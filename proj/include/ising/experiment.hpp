#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ising/lattice.hpp"
#include "ising/observables.hpp"
#include "ising/spin_mc.hpp"
#include "json.hpp"

namespace ising {

inline constexpr int kConfigSchemaVersion = 1;

/// Literature estimates of the nearest-neighbour critical point on Z^d
/// (d = 2 exact). Throws for other dimensions.
double critical_beta(int dimension);

/// A number, "critical" or "critical:d".
double resolve_beta(const nlohmann::json& value, int dimension);

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string experiment_id = "scan";
  int dimension = 2;
  std::vector<int> radii{2, 4, 8};
  double cube_ratio = 2.0;  // M: two-point runs use the free box of radius round(M n)
  nlohmann::json beta = "critical";
  Boundary bc = Boundary::free;
  double h = 0.0;
  double lattice_spacing = 1.0;
  Schedule schedule;
  int replicas = 1;
  bool periodic_contrast = false;  // also chi_n on periodic boxes
  std::uint64_t site_budget = 4'000'000;
  double time_limit_seconds = 0.0;  // 0: none
  std::string output;               // default output directory; the CLI --out wins

  // tilt experiment
  int tilt_side = 8;  // box {0..side-1}^d
  std::vector<double> tilt_h{0.1, 0.2};
  std::vector<double> mgf_t{-1.0, -0.5, 0.5, 1.0};

  double resolved_beta() const { return resolve_beta(beta, dimension); }
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  /// FNV-1a of the canonical JSON of every field that affects results
  /// (site_budget, time_limit_seconds and output are left out).
  std::string hash() const;
};

struct ResultRow {
  std::string experiment_id;
  std::string observable;
  int n = 0;
  double beta = 0.0;
  std::string bc;
  double h = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

std::string csv_header();
std::string to_csv_line(const ResultRow& r);
void write_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_csv(const std::string& path);

struct ResultRecord {
  std::string experiment_id;
  std::string config_hash;
  std::vector<ResultRow> rows;
  nlohmann::json report;
  double wall_clock_seconds = 0.0;
  bool partial = false;

  nlohmann::json to_json() const;
};

struct RunOptions {
  int threads = 1;
  std::string out_dir;  // empty: nothing written
  std::function<void(const std::string&)> log;
};

// ---------------------------------------------------------------------------
// verification suite

enum class VerifyProfile { quick, full, empty };

VerifyProfile verify_profile_from_string(const std::string& name);

struct VerifyOptions {
  VerifyProfile profile = VerifyProfile::quick;
  bool corrupt_weights = false;  // negative control for the switching check
  std::uint64_t seed = 1;
};

struct VerifyReport {
  nlohmann::json checks = nlohmann::json::array();
  int passed = 0;
  int failed = 0;
  int skipped = 0;

  bool ok() const { return failed == 0 && passed > 0; }
  nlohmann::json to_json() const;
};

VerifyReport run_verify(const VerifyOptions& options, const RunOptions& run = {});

/// Individual families of the suite (used by run_verify and acceptance).
void verify_switching_suite(VerifyReport& report, VerifyProfile profile, bool corrupt);
void verify_backbone_suite(VerifyReport& report, VerifyProfile profile);
void verify_reflection_suite(VerifyReport& report, VerifyProfile profile, std::uint64_t seed);
void verify_tfin_suite(VerifyReport& report, VerifyProfile profile);
void verify_rho_trend_suite(VerifyReport& report);

// ---------------------------------------------------------------------------
// Monte Carlo experiments

/// Bulk pairs (x, x + n e_i) with both ends in the centred box of radius n,
/// as vertices of `g`.
std::vector<VertexPair> bulk_pairs(const LatticeGraph& g, int n);

ResultRecord run_scan(const ExperimentConfig& cfg, const RunOptions& run = {});
ResultRecord run_tilt_experiment(const ExperimentConfig& cfg, const RunOptions& run = {});

struct FitRequest {
  std::vector<std::string> files;
  std::string observable;  // empty: the files must hold a single observable
  int min_n = 0;
  int max_n = 0;  // 0: no upper bound
  std::string out_dir;
};

nlohmann::json run_fit(const FitRequest& request);

/// Runs `tasks` on up to `threads` workers; results land in task order.
void parallel_for(std::size_t tasks, int threads, const std::function<void(std::size_t)>& body);

}  // namespace ising
