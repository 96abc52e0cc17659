#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ising/experiment.hpp"
#include "ising/rng.hpp"

using namespace ising;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ising_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig small_scan() {
  ExperimentConfig c;
  c.experiment_id = "unit";
  c.dimension = 1;
  c.radii = {1, 2, 3, 4};
  c.beta = 0.5;
  c.schedule.n_samples = 20000;
  c.schedule.burn_in = 100;
  c.schedule.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("config hash") {
  const ExperimentConfig base;
  const std::string h0 = base.hash();
  CHECK(h0.size() == 16);
  CHECK(h0 == ExperimentConfig::from_json(base.to_json()).hash());

  auto changed = [&](auto mutate) {
    ExperimentConfig c = base;
    mutate(c);
    return c.hash() != h0;
  };
  CHECK(changed([](ExperimentConfig& c) { c.dimension = 3; }));
  CHECK(changed([](ExperimentConfig& c) { c.radii = {2, 4}; }));
  CHECK(changed([](ExperimentConfig& c) { c.beta = 0.3; }));
  CHECK(changed([](ExperimentConfig& c) { c.schedule.seed = 9; }));
  CHECK(changed([](ExperimentConfig& c) { c.schedule.sampler = Sampler::hybrid; }));
  CHECK(changed([](ExperimentConfig& c) { c.cube_ratio = 3.0; }));
  CHECK(changed([](ExperimentConfig& c) { c.tilt_h = {0.1}; }));
  CHECK(changed([](ExperimentConfig& c) { c.experiment_id = "other"; }));
  // resource limits and spelling of the same beta do not change results
  CHECK_FALSE(changed([](ExperimentConfig& c) { c.time_limit_seconds = 60; }));
  CHECK_FALSE(changed([](ExperimentConfig& c) { c.site_budget = 123456789; }));
  CHECK_FALSE(changed([](ExperimentConfig& c) { c.output = "elsewhere"; }));
  CHECK_FALSE(changed([](ExperimentConfig& c) { c.beta = critical_beta(2); }));

  // pinned: catches accidental changes to the canonical form
  CHECK(h0 == "c3d10ca9d4c999c9");
}

TEST_CASE("config parsing") {
  CHECK(critical_beta(2) == doctest::Approx(0.4406867935).epsilon(1e-10));
  CHECK(resolve_beta("critical:4", 2) == critical_beta(4));
  CHECK_THROWS_AS(resolve_beta("warm", 2), std::invalid_argument);
  CHECK_THROWS_AS(critical_beta(7), std::invalid_argument);

  nlohmann::json j = ExperimentConfig{}.to_json();
  j["radii"] = {4, 2};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j = ExperimentConfig{}.to_json();
  j["radiuses"] = {2};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j = ExperimentConfig{}.to_json();
  j["schema_version"] = 2;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j = ExperimentConfig{}.to_json();
  j["dimension"] = 4;
  j["radii"] = {8, 40};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);  // site budget

  const fs::path dir = scratch("config");
  std::ofstream(dir / "c.json") << R"({"experiment_id": "x", "dimension": 3, "radii": [2, 3, 4],
    // comments allowed
    "schedule": {"n_samples": 50, "seed": 4, "sampler": "hybrid"}})";
  const auto c = ExperimentConfig::load((dir / "c.json").string());
  CHECK(c.dimension == 3);
  CHECK(c.schedule.sampler == Sampler::hybrid);
  CHECK(c.resolved_beta() == critical_beta(3));
  CHECK_THROWS(ExperimentConfig::load((dir / "missing.json").string()));
}

TEST_CASE("csv round trip") {
  const std::vector<ResultRow> rows{{"e", "chi", 4, 0.1, "free", 0.0, 1.0 / 3.0, 1e-17, 100, 2.5, 7},
                                    {"e", "two_point", 8, 0.44068679350977147, "periodic", 0.25, -0.1, 0.2, 5, 0.5,
                                     18446744073709551615ULL}};
  const fs::path dir = scratch("csv");
  write_csv((dir / "r.csv").string(), rows);
  const auto back = read_csv((dir / "r.csv").string());
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(to_csv_line(back[i]) == to_csv_line(rows[i]));
  CHECK(back[1].beta == rows[1].beta);
  CHECK(back[1].seed == rows[1].seed);

  std::ofstream(dir / "bad.csv") << "a,b\n";
  CHECK_THROWS_AS(read_csv((dir / "bad.csv").string()), std::invalid_argument);
}

TEST_CASE("parallel_for") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 5) throw std::runtime_error("x");
                               }),
                  std::runtime_error);
}

TEST_CASE("bulk pairs") {
  const auto g = LatticeGraph::box(2, {4, 4}, Boundary::free);
  const auto pairs = bulk_pairs(g, 2);
  CHECK(pairs.size() == 2 * 3 * 5);
  for (const auto& [x, y] : pairs) {
    const Coord a = g.coord(x);
    const Coord b = g.coord(y);
    int dist = 0;
    for (int i = 0; i < 2; ++i) {
      dist += std::abs(a[i] - b[i]);
      CHECK(std::abs(a[i]) <= 2);
      CHECK(std::abs(b[i]) <= 2);
    }
    CHECK(dist == 2);
  }
}

TEST_CASE("scan") {
  SUBCASE("d = 1: exponential decay") {
    auto c = small_scan();
    c.radii = {4, 8, 16};
    c.beta = 1.0;
    const auto rec = run_scan(c);
    CHECK_FALSE(rec.partial);
    int checked = 0;
    for (const auto& r : rec.rows) {
      if (r.observable != "two_point") continue;
      const double exact = std::pow(std::tanh(1.0), r.n);
      CHECK(std::abs(r.value - exact) < 4.5 * r.std_error);
      CHECK(r.n_samples == 20000);
      ++checked;
    }
    CHECK(checked == 3);
    const auto& fit = rec.report["fits"]["two_point"];
    const double rate = fit["exponential_rate"];
    CHECK(std::abs(rate + std::log(std::tanh(1.0))) < 4.5 * fit["exponential_rate_error"].get<double>());
  }

  SUBCASE("beta = 0: chi = 1") {
    auto c = small_scan();
    c.dimension = 2;
    c.radii = {1, 2, 3};
    c.beta = 0.0;
    c.schedule.n_samples = 5000;
    for (const auto& r : run_scan(c).rows)
      if (r.observable == "chi") CHECK(std::abs(r.value - 1.0) < 4.5 * r.std_error);
  }

  SUBCASE("reproducible, independent of threads") {
    auto c = small_scan();
    c.schedule.n_samples = 500;
    c.replicas = 2;
    c.periodic_contrast = true;
    const fs::path a = scratch("scan_a");
    const fs::path b = scratch("scan_b");
    run_scan(c, {1, a.string(), {}});
    run_scan(c, {3, b.string(), {}});
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
    const auto rows = read_csv((a / "results.csv").string());
    CHECK(rows.size() == 4 * 3);
    for (const auto& r : rows) CHECK(r.n_samples == 1000);
    CHECK(fs::exists(a / "scan.json"));
  }

  SUBCASE("time limit gives a partial record") {
    auto c = small_scan();
    c.time_limit_seconds = 1e-9;
    const auto rec = run_scan(c);
    CHECK(rec.partial);
    CHECK(rec.rows.size() < 8);
  }

  SUBCASE("nonzero field rejected") {
    auto c = small_scan();
    c.h = 0.1;
    CHECK_THROWS_AS(run_scan(c), std::invalid_argument);
  }
}

TEST_CASE("fit") {
  const fs::path dir = scratch("fit");
  std::vector<ResultRow> rows;
  for (int n : {2, 4, 8, 16}) rows.push_back({"s", "chi", n, 0.1, "free", 0, 3.0 * n * n, 0.01 * n * n, 100, 1, 1});
  write_csv((dir / "chi.csv").string(), rows);
  const auto j = run_fit({{(dir / "chi.csv").string()}, "", 0, 0, (dir / "out").string()});
  CHECK(j["exponent"].get<double>() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(j["amplitude"].get<double>() == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(fs::exists(dir / "out" / "fit.csv"));

  // r^-2 with 2% noise on the d = 4 radii
  {
    Rng rng(3);
    std::vector<ResultRow> tp;
    for (int n = 3; n <= 8; ++n) {
      const double v = 0.15 / (n * n);
      tp.push_back({"s", "two_point", n, 0.15, "free", 0, v * (1.0 + 0.02 * rng.normal()), 0.02 * v, 100, 1, 1});
    }
    write_csv((dir / "tp.csv").string(), tp);
    const auto f = run_fit({{(dir / "tp.csv").string()}, "", 0, 0, ""});
    CHECK(std::abs(f["exponent"].get<double>() + 2.0) < 3.0 * f["exponent_error"].get<double>());
    CHECK(f["exponent_error"].get<double>() < 0.1);
  }

  const auto windowed = run_fit({{(dir / "chi.csv").string()}, "chi", 3, 16, ""});
  CHECK(windowed["points"] == 3);

  rows.push_back({"s", "two_point", 4, 0.1, "free", 0, 0.1, 0.01, 100, 1, 1});
  write_csv((dir / "mixed.csv").string(), rows);
  CHECK_THROWS_AS(run_fit({{(dir / "mixed.csv").string()}, "", 0, 0, ""}), std::invalid_argument);
  CHECK(run_fit({{(dir / "mixed.csv").string()}, "chi", 0, 0, ""})["points"] == 4);
  CHECK_THROWS_AS(run_fit({{(dir / "mixed.csv").string()}, "two_point", 0, 0, ""}), std::invalid_argument);
  CHECK_THROWS_AS(run_fit({{(dir / "chi.csv").string(), (dir / "chi.csv").string()}, "", 0, 0, ""}),
                  std::invalid_argument);
}

TEST_CASE("verify") {
  SUBCASE("quick profile passes") {
    const auto r = run_verify({VerifyProfile::quick, false, 1});
    CHECK(r.failed == 0);
    CHECK(r.passed >= 40);
    CHECK(r.ok());
    int switching = 0;
    for (const auto& c : r.checks) switching += c["check"] == "switching";
    CHECK(switching >= 20);
  }
  SUBCASE("corrupted weights fail") {
    VerifyReport r;
    verify_switching_suite(r, VerifyProfile::quick, true);
    CHECK(r.failed > 0);
    CHECK_FALSE(r.ok());
  }
  SUBCASE("empty profile is not a pass") {
    const auto r = run_verify({VerifyProfile::empty, false, 1});
    CHECK(r.passed == 0);
    CHECK_FALSE(r.ok());
    CHECK(r.to_json()["summary"]["status"] == "nothing-ran");
  }
  CHECK_THROWS_AS(verify_profile_from_string("medium"), std::invalid_argument);
}

TEST_CASE("tilt on a single site") {
  ExperimentConfig c;
  c.experiment_id = "one";
  c.dimension = 1;
  c.beta = 0.7;
  c.tilt_side = 1;
  c.tilt_h = {0.3};
  c.schedule.n_samples = 40000;
  c.schedule.seed = 2;
  const auto rec = run_tilt_experiment(c);
  int checked = 0;
  for (const auto& r : rec.rows) {
    if (r.observable.rfind("phi_mean:", 0) != 0) continue;
    const double exact = r.observable.find("coordinate") != std::string::npos ? 0.0 : std::tanh(0.3);
    CHECK(std::abs(r.value - exact) <= 4.5 * r.std_error + 1e-12);
    ++checked;
  }
  CHECK(checked == 6);
}

TEST_CASE("tilt experiment") {
  ExperimentConfig c;
  c.experiment_id = "tilt";
  c.dimension = 2;
  c.beta = 0.35;
  c.tilt_side = 8;
  c.tilt_h = {0.0, 0.05};
  c.schedule.n_samples = 20000;
  c.schedule.seed = 5;
  const auto rec = run_tilt_experiment(c);
  const auto& rep = rec.report;
  CHECK(rep["comparisons_total"] == 12);
  CHECK(rep["agree_within_3sigma"].get<int>() >= 11);
  CHECK(rep["gaussian_control"]["pass"] == true);
  for (const auto& cmp : rep["comparisons"]) {
    if (cmp["h"] == 0.0) CHECK(cmp["mean"]["z"].get<double>() == 0.0);
    CHECK(cmp["mgf"].size() == 4);
  }
}
