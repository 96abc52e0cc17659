#include "ising/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ising/current.hpp"
#include "ising/errors.hpp"
#include "ising/exact.hpp"
#include "ising/rng.hpp"
#include "ising/statistics.hpp"

namespace ising {

double critical_beta(int dimension) {
  switch (dimension) {
    case 2: return 0.5 * std::log(1.0 + std::sqrt(2.0));
    case 3: return 0.22165455;
    case 4: return 0.1496947;
    case 5: return 0.11391498;
    default: throw std::invalid_argument("no critical-point default for d = " + std::to_string(dimension));
  }
}

double resolve_beta(const nlohmann::json& value, int dimension) {
  if (value.is_number()) {
    const double b = value.get<double>();
    if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("beta must be finite and >= 0");
    return b;
  }
  if (!value.is_string()) throw std::invalid_argument("beta must be a number or \"critical[:d]\"");
  const std::string s = value.get<std::string>();
  if (s == "critical") return critical_beta(dimension);
  if (s.rfind("critical:", 0) == 0) return critical_beta(std::stoi(s.substr(9)));
  throw std::invalid_argument("unrecognised beta '" + s + "'");
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw std::invalid_argument("unsupported config schema_version " + std::to_string(schema_version));
  if (experiment_id.empty()) throw std::invalid_argument("experiment_id must not be empty");
  if (dimension < 1 || dimension > 6) throw std::invalid_argument("dimension must be in 1..6");
  if (radii.empty()) throw std::invalid_argument("radii must not be empty");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] < 1) throw std::invalid_argument("radii must be positive");
    if (i > 0 && radii[i] <= radii[i - 1]) throw std::invalid_argument("radii must be strictly increasing");
  }
  if (!(cube_ratio >= 1.0)) throw std::invalid_argument("cube_ratio must be >= 1");
  resolved_beta();
  if (!std::isfinite(h)) throw std::invalid_argument("h must be finite");
  if (!(lattice_spacing > 0.0)) throw std::invalid_argument("lattice_spacing must be > 0");
  schedule.validate();
  if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  if (tilt_side < 1) throw std::invalid_argument("tilt.side must be >= 1");
  const int outer = static_cast<int>(std::lround(cube_ratio * radii.back()));
  const double sites = std::pow(2.0 * outer + 1.0, dimension);
  if (sites > static_cast<double>(site_budget))
    throw std::invalid_argument("largest box has " + std::to_string(static_cast<long long>(sites)) +
                                " sites, above site_budget " + std::to_string(site_budget));
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"schema_version", schema_version},
          {"experiment_id", experiment_id},
          {"dimension", dimension},
          {"radii", radii},
          {"cube_ratio", cube_ratio},
          {"beta", beta},
          {"bc", to_string(bc)},
          {"h", h},
          {"lattice_spacing", lattice_spacing},
          {"schedule", schedule.to_json()},
          {"replicas", replicas},
          {"periodic_contrast", periodic_contrast},
          {"site_budget", site_budget},
          {"time_limit_seconds", time_limit_seconds},
          {"output", output},
          {"tilt", {{"side", tilt_side}, {"h", tilt_h}, {"mgf_t", mgf_t}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> known{"schema_version", "experiment_id", "dimension",  "radii",
                                           "cube_ratio",     "beta",          "bc",         "h",
                                           "lattice_spacing", "schedule",     "replicas",   "periodic_contrast",
                                           "site_budget",    "time_limit_seconds", "tilt", "output"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");

  ExperimentConfig c;
  c.schema_version = j.value("schema_version", c.schema_version);
  c.experiment_id = j.value("experiment_id", c.experiment_id);
  c.dimension = j.value("dimension", c.dimension);
  c.radii = j.value("radii", c.radii);
  c.cube_ratio = j.value("cube_ratio", c.cube_ratio);
  if (j.contains("beta")) c.beta = j.at("beta");
  c.bc = boundary_from_string(j.value("bc", to_string(c.bc)));
  c.h = j.value("h", c.h);
  c.lattice_spacing = j.value("lattice_spacing", c.lattice_spacing);
  if (j.contains("schedule")) c.schedule = Schedule::from_json(j.at("schedule"));
  c.replicas = j.value("replicas", c.replicas);
  c.periodic_contrast = j.value("periodic_contrast", c.periodic_contrast);
  c.site_budget = j.value("site_budget", c.site_budget);
  c.time_limit_seconds = j.value("time_limit_seconds", c.time_limit_seconds);
  c.output = j.value("output", c.output);
  if (j.contains("tilt")) {
    const auto& t = j.at("tilt");
    for (const auto& [key, value] : t.items())
      if (key != "side" && key != "h" && key != "mgf_t") throw std::invalid_argument("unknown tilt key '" + key + "'");
    c.tilt_side = t.value("side", c.tilt_side);
    c.tilt_h = t.value("h", c.tilt_h);
    c.mgf_t = t.value("mgf_t", c.mgf_t);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("site_budget");
  j.erase("time_limit_seconds");
  j.erase("output");
  if (!j["beta"].is_number()) j["beta"] = resolved_beta();  // "critical" and its value are the same input
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

std::string csv_header() { return "experiment_id,observable,n,beta,bc,h,value,std_error,n_samples,tau,seed"; }

std::string to_csv_line(const ResultRow& r) {
  return r.experiment_id + "," + r.observable + "," + std::to_string(r.n) + "," + fmt(r.beta) + "," + r.bc + "," +
         fmt(r.h) + "," + fmt(r.value) + "," + fmt(r.std_error) + "," + std::to_string(r.n_samples) + "," +
         fmt(r.tau) + "," + std::to_string(r.seed);
}

void write_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv_header() << "\n";
  for (const auto& r : rows) out << to_csv_line(r) << "\n";
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(csv_header()))
    throw std::invalid_argument(path + ": not a results file (header mismatch)");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected 11 fields");
    try {
      rows.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), f[4], std::stod(f[5]), std::stod(f[6]),
                      std::stod(f[7]), std::stoull(f[8]), std::stod(f[9]), std::stoull(f[10])});
    } catch (const std::logic_error&) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": malformed field");
    }
  }
  return rows;
}

nlohmann::json ResultRecord::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"observable", r.observable}, {"n", r.n}, {"beta", r.beta}, {"bc", r.bc}, {"h", r.h},
                         {"value", r.value}, {"std_error", r.std_error}, {"n_samples", r.n_samples},
                         {"tau", r.tau}, {"seed", r.seed}});
  return {{"experiment_id", experiment_id}, {"config_hash", config_hash},   {"rows", rows_json},
          {"report", report},               {"wall_clock_seconds", wall_clock_seconds}, {"partial", partial}};
}

void parallel_for(std::size_t tasks, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// verification suite

VerifyProfile verify_profile_from_string(const std::string& name) {
  if (name == "quick") return VerifyProfile::quick;
  if (name == "full") return VerifyProfile::full;
  if (name == "empty") return VerifyProfile::empty;
  throw std::invalid_argument("unknown profile '" + name + "' (expected quick|full|empty)");
}

nlohmann::json VerifyReport::to_json() const {
  std::string status = ok() ? "pass" : (passed + failed == 0 ? "nothing-ran" : "fail");
  return {{"checks", checks},
          {"summary", {{"passed", passed}, {"failed", failed}, {"skipped", skipped}, {"status", status}}}};
}

namespace {

constexpr double kIdentityTolerance = 1e-10;

void record(VerifyReport& report, const std::string& check, const std::string& instance, const std::string& metric,
            double value, bool pass, nlohmann::json extra = {}) {
  nlohmann::json j{{"check", check}, {"instance", instance}, {metric, value}, {"pass", pass}};
  if (extra.is_object())
    for (auto& [k, v] : extra.items()) j[k] = v;
  report.checks.push_back(j);
  pass ? ++report.passed : ++report.failed;
}

void skip(VerifyReport& report, const std::string& check, const std::string& instance, const std::string& why) {
  report.checks.push_back({{"check", check}, {"instance", instance}, {"pass", nullptr}, {"skipped", why}});
  ++report.skipped;
}

struct NamedGraph {
  std::string name;
  LatticeGraph g;
};

std::string coord_str(const Coord& x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
  return s + ")";
}

double corrupted_weight(int k, double b) { return std::pow(b, k) / std::tgamma(k + 1.0) * (1.0 + 0.1 * k); }

}  // namespace

void verify_switching_suite(VerifyReport& report, VerifyProfile profile, bool corrupt) {
  if (profile == VerifyProfile::empty) return;
  const int cap = profile == VerifyProfile::full ? 4 : 3;
  const std::vector<double> betas = profile == VerifyProfile::full ? std::vector<double>{0.3, 0.8}
                                                                    : std::vector<double>{0.5};
  const std::vector<NamedGraph> graphs{
      {"edge", LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free)},
      {"path3", LatticeGraph::box(Coord{0}, Coord{2}, Boundary::free)},
      {"path4", LatticeGraph::box(Coord{0}, Coord{3}, Boundary::free)},
      {"triangle", LatticeGraph::box(1, {1}, Boundary::periodic)},
      {"square", LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free)},
      {"box2x3", LatticeGraph::box(Coord{0, 0}, Coord{1, 2}, Boundary::free)},
      {"ring8", LatticeGraph::box(Coord{0}, Coord{7}, Boundary::periodic)},
  };
  const EdgeWeightFn weight_fn = corrupt ? EdgeWeightFn(corrupted_weight) : EdgeWeightFn(standard_edge_weight);

  for (const auto& [name, g] : graphs) {
    const Vertex x = 0;
    const Vertex y = g.vertex_count() - 1;
    std::vector<std::pair<std::string, VertexSet>> sources{{"A={}", {}}, {"A={x,y}", {x, y}}};
    if (g.vertex_count() >= 4) sources.push_back({"A=4pt", {0, 1, g.vertex_count() - 2, g.vertex_count() - 1}});

    // G1: all of G, and G minus the last edge when x, y stay connected.
    std::vector<std::pair<std::string, EdgeMask>> subgraphs{{"G1=G", all_edges(g)}};
    if (g.edge_count() >= 3) {
      EdgeMask m = all_edges(g);
      m[0] = false;
      CurrentConfiguration ones{std::vector<int>(g.edge_count(), 1)};
      if (connected(g, ones, x, y, m)) subgraphs.push_back({"G1=G-e0", m});
    }
    for (const auto& [sname, a] : sources) {
      for (const auto& [gname, mask] : subgraphs) {
        for (double beta : betas) {
          const std::string inst = name + " " + sname + " " + gname + " cap=" + std::to_string(cap) +
                                   " beta=" + fmt(beta);
          try {
            const auto r = verify_switching(g, mask, a, x, y, cap, beta, weight_fn);
            record(report, "switching", inst, "deviation", r.max_deviation, r.max_deviation < kIdentityTolerance,
                   {{"levels", r.levels}, {"nonzero_levels", r.nonzero_levels}});
          } catch (const BudgetExceeded& e) {
            skip(report, "switching", inst, e.what());
          }
        }
      }
    }
  }
}

void verify_backbone_suite(VerifyReport& report, VerifyProfile profile) {
  if (profile == VerifyProfile::empty) return;
  const bool full = profile == VerifyProfile::full;
  const std::vector<double> betas = full ? std::vector<double>{0.3, 0.7} : std::vector<double>{0.45};
  std::vector<EdgeOrder> orders{EdgeOrder::lexicographic(), EdgeOrder::reversed()};
  if (full) orders.push_back(EdgeOrder::hashed(12345));
  std::vector<NamedGraph> graphs{
      {"edge", LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free)},
      {"path3", LatticeGraph::box(Coord{0}, Coord{2}, Boundary::free)},
      {"path5", LatticeGraph::box(Coord{0}, Coord{4}, Boundary::free)},
      {"square", LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free)},
      {"box2x3", LatticeGraph::box(Coord{0, 0}, Coord{1, 2}, Boundary::free)},
      {"box2x3-cut", LatticeGraph::box(Coord{0, 0}, Coord{1, 2}, Boundary::free).remove_edges(std::vector<EdgeId>{2})},
  };
  if (full) graphs.push_back({"box2x4", LatticeGraph::box(Coord{0, 0}, Coord{1, 3}, Boundary::free)});

  for (const auto& [name, g] : graphs) {
    std::vector<VertexPair> pairs{{0, g.vertex_count() - 1}};
    if (g.vertex_count() > 2) pairs.push_back({1, g.vertex_count() - 1});
    for (const EdgeOrder& order : orders) {
      for (const auto& [x, y] : pairs) {
        for (double beta : betas) {
          const std::string inst = name + " " + coord_str(g.coord(x)) + "->" + coord_str(g.coord(y)) + " order=" +
                                   order.name() + " beta=" + fmt(beta);
          try {
            const auto r = verify_backbone_expansion(g, beta, x, y, order);
            record(report, "backbone_expansion", inst, "deviation", r.deviation, r.deviation < kIdentityTolerance,
                   {{"backbones", r.backbones}, {"correlation", r.correlation}});

            // concatenation: every backbone split at every interior point
            double worst = 0.0;
            std::size_t splits = 0;
            const auto backbones = enumerate_backbones(g, order, x, y);
            const std::size_t limit = full ? backbones.size() : std::min<std::size_t>(backbones.size(), 40);
            for (std::size_t b = 0; b < limit; ++b) {
              const auto& steps = backbones[b].steps();
              for (std::size_t cut = 0; cut <= steps.size(); ++cut) {
                const Backbone w1 = cut == 0 ? Backbone::trivial(x)
                                             : Backbone::from_steps(g, order, {steps.begin(), steps.begin() + cut});
                const Backbone w2 =
                    cut == steps.size()
                        ? Backbone::trivial(y)
                        : Backbone::from_steps(g, order, {steps.begin() + cut, steps.end()});
                worst = std::max(worst, verify_concat(g, beta, w1, w2, order).deviation);
                ++splits;
              }
            }
            record(report, "concatenation", inst, "deviation", worst, worst < kIdentityTolerance,
                   {{"splits", splits}});
          } catch (const BudgetExceeded& e) {
            skip(report, "backbone_expansion", inst, e.what());
          }
        }
      }
    }
  }
}

void verify_reflection_suite(VerifyReport& report, VerifyProfile profile, std::uint64_t seed) {
  if (profile == VerifyProfile::empty) return;
  const int sets = profile == VerifyProfile::full ? 50 : 10;
  const std::vector<std::pair<int, int>> boxes{{1, 1}, {2, 1}, {1, 2}, {2, 2}};
  Rng rng(derive_seed(seed, 31));
  for (const auto& [r1, r2] : boxes) {
    const auto d = LatticeGraph::box(2, {r1, r2}, Boundary::free);
    std::vector<EdgeId> mirror_side;
    for (EdgeId e = 0; e < d.edge_count(); ++e)
      if (d.coord(d.edge(e).u)[0] <= 0 && d.coord(d.edge(e).v)[0] <= 0) mirror_side.push_back(e);
    for (double beta : {0.2, 0.44, 0.8}) {
      int violations = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sets; ++k) {
        std::vector<EdgeId> a_bar;
        for (EdgeId e : mirror_side)
          if (rng.uniform() < 0.35) a_bar.push_back(e);
        const Vertex u = d.index({0, static_cast<int>(rng.below(2 * r2 + 1)) - r2});
        const Vertex y = d.index({static_cast<int>(rng.below(r1 + 1)), static_cast<int>(rng.below(2 * r2 + 1)) - r2});
        const auto res = verify_reflection(d, a_bar, beta, u, y);
        violations += !res.holds;
        worst = std::min(worst, res.margin);
      }
      record(report, "reflection",
             "D=[-" + std::to_string(r1) + "," + std::to_string(r1) + "]x[-" + std::to_string(r2) + "," +
                 std::to_string(r2) + "] sets=" + std::to_string(sets) + " beta=" + fmt(beta),
             "min_margin", worst, violations == 0, {{"violations", violations}});
    }
  }
}

void verify_tfin_suite(VerifyReport& report, VerifyProfile profile) {
  if (profile == VerifyProfile::empty) return;
  // d = 1 against closed-form path correlations
  const auto line = LatticeGraph::box(1, {9}, Boundary::free);
  for (int inner : {2, 3}) {
    for (double beta : {0.3, 0.6, 1.0}) {
      for (const auto& [x, y] : std::vector<std::pair<int, int>>{{0, 1}, {-1, 2}, {0, inner}}) {
        const auto r = verify_tfin(line, {inner}, beta, {x}, {y});
        double closed_rhs = path_correlation(beta, x - (2 * inner - y)) + path_correlation(beta, x - (-2 * inner - y));
        const bool exact_ok = std::abs(r.lhs) < 1e-12 && std::abs(r.rhs - closed_rhs) < 1e-12;
        record(report, "tfin",
               "d=1 outer=9 inner=" + std::to_string(inner) + " x=" + std::to_string(x) + " y=" + std::to_string(y) +
                   " beta=" + fmt(beta),
               "slack", r.margin, r.holds && exact_ok, {{"lhs", r.lhs}, {"rhs", r.rhs}});
      }
    }
  }
  // d = 2 via the transfer matrix
  const auto outer = LatticeGraph::box(2, {5, 5}, Boundary::free);
  std::vector<Coord> ys{{1, 0}, {1, 1}};
  if (profile == VerifyProfile::full) ys.push_back({0, 1});
  for (double beta : {0.3, 0.44, 0.6}) {
    for (const Coord& y : ys) {
      const auto r = verify_tfin(outer, {2, 2}, beta, {0, 0}, y);
      record(report, "tfin", "d=2 outer=[-5,5]^2 inner=[-2,2]^2 x=(0,0) y=" + coord_str(y) + " beta=" + fmt(beta),
             "slack", r.margin, r.holds, {{"lhs", r.lhs}, {"rhs", r.rhs}});
    }
  }
}

void verify_rho_trend_suite(VerifyReport& report) {
  const EdgeOrder order = EdgeOrder::lexicographic();
  const std::vector<std::pair<std::string, std::vector<Coord>>> paths{
      {"(0,0)->(1,0)", {{0, 0}, {1, 0}}},
      {"(0,0)->(0,1)", {{0, 0}, {0, 1}}},
      {"(0,0)->(1,0)->(1,1)", {{0, 0}, {1, 0}, {1, 1}}},
  };
  for (double beta : {0.3, 0.44}) {
    for (const auto& [name, pts] : paths) {
      std::vector<double> rho;
      for (int r : {1, 2, 3}) {
        const auto g = LatticeGraph::box(2, {r, r}, Boundary::free);
        std::vector<OrientedEdge> steps;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) steps.push_back(orient(g, g.index(pts[i]), g.index(pts[i + 1])));
        rho.push_back(rho_exact(g, beta, Backbone::from_steps(g, order, steps)));
      }
      const double d1 = std::abs(rho[1] - rho[0]);
      const double d2 = std::abs(rho[2] - rho[1]);
      record(report, "rho_trend", name + " beta=" + fmt(beta), "ratio", d1 > 0 ? d2 / d1 : 0.0, d2 < d1,
             {{"rho", rho}, {"differences", {d1, d2}}});
    }
  }
}

VerifyReport run_verify(const VerifyOptions& options, const RunOptions& run) {
  VerifyReport report;
  auto log = [&](const std::string& s) {
    if (run.log) run.log(s);
  };
  log("switching");
  verify_switching_suite(report, options.profile, options.corrupt_weights);
  log("backbones");
  verify_backbone_suite(report, options.profile);
  log("reflection");
  verify_reflection_suite(report, options.profile, options.seed);
  log("finite-volume bound");
  verify_tfin_suite(report, options.profile);
  if (options.profile != VerifyProfile::empty) {
    log("rho trend");
    verify_rho_trend_suite(report);
  }
  if (!run.out_dir.empty()) {
    ensure_dir(run.out_dir);
    nlohmann::json j = report.to_json();
    j["profile"] = options.profile == VerifyProfile::full ? "full"
                   : options.profile == VerifyProfile::quick ? "quick"
                                                              : "empty";
    write_json((std::filesystem::path(run.out_dir) / "verify.json").string(), j);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments

std::vector<VertexPair> bulk_pairs(const LatticeGraph& g, int n) {
  const int d = g.dimension();
  const auto inner = LatticeGraph::box(d, std::vector<int>(d, n), Boundary::free);
  std::vector<VertexPair> out;
  for (Vertex v = 0; v < inner.vertex_count(); ++v) {
    const Coord x = inner.coord(v);
    for (int axis = 0; axis < d; ++axis) {
      if (x[axis] + n > n) continue;
      Coord y = x;
      y[axis] += n;
      out.push_back({g.index(x), g.index(y)});
    }
  }
  return out;
}

namespace {

enum class ScanKind { two_point = 0, chi = 1, chi_periodic = 2 };

const char* kind_name(ScanKind k) {
  switch (k) {
    case ScanKind::two_point: return "two_point";
    case ScanKind::chi: return "chi";
    case ScanKind::chi_periodic: return "chi_periodic";
  }
  return "?";
}

struct ScanTask {
  std::size_t radius_index;
  ScanKind kind;
  int replica;
};

struct ScanOutcome {
  bool done = false;
  EstimateRecord estimate;
  std::uint64_t seed = 0;
  std::uint64_t clusters_per_sweep = 0;
  double seconds = 0.0;
  std::size_t sites = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json fit_json(const std::vector<ResultRow>& rows, const std::string& observable) {
  std::vector<FitPoint> pts;
  for (const auto& r : rows)
    if (r.observable == observable && r.value > 0.0) pts.push_back({double(r.n), r.value, r.std_error});
  if (pts.size() < 3) return nullptr;
  try {
    nlohmann::json j = fit_power_law(pts).to_json();
    try {
      const auto e = fit_exponential(pts);
      j["exponential_rate"] = e.rate;
      j["exponential_rate_error"] = e.rate_error;
      j["exponential_chi2"] = e.chi2;
    } catch (const std::invalid_argument&) {
    }
    return j;
  } catch (const std::invalid_argument& e) {
    return {{"error", e.what()}};
  }
}

}  // namespace

ResultRecord run_scan(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  if (cfg.h != 0.0) throw std::invalid_argument("scan runs at zero field (h = 0)");
  const auto t0 = std::chrono::steady_clock::now();
  const double beta = cfg.resolved_beta();
  const int d = cfg.dimension;

  std::vector<ScanTask> tasks;
  std::vector<ScanKind> kinds{ScanKind::two_point, ScanKind::chi};
  if (cfg.periodic_contrast) kinds.push_back(ScanKind::chi_periodic);
  for (std::size_t i = 0; i < cfg.radii.size(); ++i)
    for (ScanKind k : kinds)
      for (int r = 0; r < cfg.replicas; ++r) tasks.push_back({i, k, r});

  std::vector<ScanOutcome> outcomes(tasks.size());
  std::atomic<bool> overrun{false};
  parallel_for(tasks.size(), run.threads, [&](std::size_t t) {
    const ScanTask& task = tasks[t];
    if (cfg.time_limit_seconds > 0.0 && seconds_since(t0) > cfg.time_limit_seconds) {
      overrun = true;
      return;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const int n = cfg.radii[task.radius_index];
    LatticeGraph g = [&] {
      switch (task.kind) {
        case ScanKind::two_point:
          if (cfg.bc == Boundary::periodic) return LatticeGraph::box(d, std::vector<int>(d, n), Boundary::periodic);
          return LatticeGraph::box(d, std::vector<int>(d, static_cast<int>(std::lround(cfg.cube_ratio * n))),
                                   Boundary::free);
        case ScanKind::chi: return LatticeGraph::box(d, std::vector<int>(d, n), cfg.bc);
        case ScanKind::chi_periodic: return LatticeGraph::box(d, std::vector<int>(d, n), Boundary::periodic);
      }
      throw std::logic_error("bad scan kind");
    }();
    const std::uint64_t stream =
        (task.radius_index * 8 + static_cast<std::uint64_t>(task.kind)) * 4096 + static_cast<std::uint64_t>(task.replica);
    Schedule sch = cfg.schedule;
    sch.seed = derive_seed(cfg.schedule.seed, stream);

    std::vector<double> series;
    series.reserve(sch.n_samples);
    const ModelParams p{beta, 0.0, cfg.lattice_spacing};
    EnsembleMetadata meta;
    if (task.kind == ScanKind::two_point) {
      const auto pairs = bulk_pairs(g, n);
      std::vector<std::uint32_t> a(pairs.size()), b(pairs.size());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        a[k] = static_cast<std::uint32_t>(pairs[k].first);
        b[k] = static_cast<std::uint32_t>(pairs[k].second);
      }
      meta = sample_ensemble(g, p, sch, [&](const SpinConfiguration& c, std::uint64_t) {
        long s = 0;
        for (std::size_t k = 0; k < a.size(); ++k) s += c.spins[a[k]] * c.spins[b[k]];
        series.push_back(static_cast<double>(s) / static_cast<double>(a.size()));
      });
    } else {
      const double v = static_cast<double>(g.vertex_count());
      meta = sample_ensemble(g, p, sch, [&](const SpinConfiguration& c, std::uint64_t) {
        const double m = static_cast<double>(c.magnetization());
        series.push_back(m * m / v);
      });
    }
    ScanOutcome& out = outcomes[t];
    out.estimate = EstimateRecord::from_series(series, sch.seed);
    out.seed = sch.seed;
    out.clusters_per_sweep = meta.clusters_per_sweep;
    out.sites = g.vertex_count();
    out.seconds = seconds_since(t1);
    out.done = true;
    if (run.log)
      run.log(std::string(kind_name(task.kind)) + " n=" + std::to_string(n) + " replica=" +
              std::to_string(task.replica) + " sites=" + std::to_string(out.sites) + " value=" +
              fmt(out.estimate.value) + " +- " + fmt(out.estimate.std_error) + " (" + fmt(out.seconds) + " s)");
  });

  ResultRecord rec;
  rec.experiment_id = cfg.experiment_id;
  rec.config_hash = cfg.hash();
  nlohmann::json ensembles = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
    for (ScanKind k : kinds) {
      EstimateRecord merged;
      bool complete = true;
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].radius_index != i || tasks[t].kind != k) continue;
        if (!outcomes[t].done) {
          complete = false;
          continue;
        }
        merged = merged.merged(outcomes[t].estimate);
        ensembles.push_back({{"observable", kind_name(k)},
                             {"n", cfg.radii[i]},
                             {"replica", tasks[t].replica},
                             {"seed", outcomes[t].seed},
                             {"sites", outcomes[t].sites},
                             {"clusters_per_sweep", outcomes[t].clusters_per_sweep},
                             {"seconds", outcomes[t].seconds}});
      }
      if (!complete) rec.partial = true;
      if (merged.n_samples == 0) continue;
      const std::string bc = k == ScanKind::chi_periodic ? "periodic" : to_string(cfg.bc);
      rec.rows.push_back({cfg.experiment_id, kind_name(k), cfg.radii[i], beta, bc, cfg.h, merged.value,
                          merged.std_error, merged.n_samples, merged.autocorrelation_time, cfg.schedule.seed});
    }
  }
  if (overrun) rec.partial = true;
  rec.wall_clock_seconds = seconds_since(t0);
  rec.report = {{"config", cfg.to_json()},
                {"beta", beta},
                {"ensembles", ensembles},
                {"fits",
                 {{"two_point", fit_json(rec.rows, "two_point")},
                  {"chi", fit_json(rec.rows, "chi")},
                  {"chi_periodic", fit_json(rec.rows, "chi_periodic")}}}};

  if (!run.out_dir.empty()) {
    ensure_dir(run.out_dir);
    write_csv((std::filesystem::path(run.out_dir) / "results.csv").string(), rec.rows);
    write_json((std::filesystem::path(run.out_dir) / "scan.json").string(), rec.to_json());
  }
  return rec;
}

// ---------------------------------------------------------------------------

namespace {

struct TiltStream {
  std::vector<double> magnetization;  // total, unscaled
  std::vector<std::vector<double>> phi;  // per test function
};

TiltStream collect_tilt(const LatticeGraph& g, const ModelParams& p, const Schedule& sch,
                        const std::vector<TestFunction>& fs, int d) {
  TiltStream s;
  s.phi.resize(fs.size());
  sample_ensemble(g, p, sch, [&](const SpinConfiguration& c, std::uint64_t) {
    s.magnetization.push_back(static_cast<double>(c.magnetization()));
    for (std::size_t k = 0; k < fs.size(); ++k) s.phi[k].push_back(field_functional(c, fs[k], p.lattice_spacing, d));
  });
  return s;
}

}  // namespace

nlohmann::json gaussian_mgf_control(std::uint64_t seed, const std::vector<double>& ts);

nlohmann::json gaussian_mgf_control(std::uint64_t seed, const std::vector<double>& ts) {
  // Synthetic Gaussian field values; log mgf must be quadratic in t.
  Rng rng(derive_seed(seed, 777));
  const double mu = 0.4;
  const double sigma = 0.9;
  std::vector<double> x(200000);
  for (double& v : x) v = mu + sigma * rng.normal();
  const double m = mean(x);
  const double var = variance(x);
  nlohmann::json points = nlohmann::json::array();
  bool pass = true;
  for (double t : ts) {
    const auto r = mgf_estimate(x, t);
    const double err = r.std_error / r.value;
    const double residual = std::log(r.value) - (t * m + 0.5 * t * t * var);
    const bool ok = std::abs(residual) <= 3.0 * err;
    pass = pass && ok;
    points.push_back({{"t", t}, {"log_mgf", std::log(r.value)}, {"error", err}, {"residual", residual}, {"pass", ok}});
  }
  return {{"mean", m}, {"variance", var}, {"points", points}, {"pass", pass}};
}

ResultRecord run_tilt_experiment(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int d = cfg.dimension;
  const double beta = cfg.resolved_beta();
  const double a = cfg.lattice_spacing;
  const auto g = LatticeGraph::box(Coord(d, 0), Coord(d, cfg.tilt_side - 1), Boundary::free);

  const std::vector<std::string> fnames{"indicator", "bump", "coordinate"};
  const std::vector<TestFunction> fs{indicator_function(g, (cfg.tilt_side - 1) / 4.0), bump_function(g),
                                     coordinate_function(g, 0)};

  // stream 0: critical H = 0 run; stream 1 + k: direct run at tilt_h[k]
  std::vector<TiltStream> streams(1 + cfg.tilt_h.size());
  std::vector<std::uint64_t> seeds(streams.size());
  parallel_for(streams.size(), run.threads, [&](std::size_t k) {
    Schedule sch = cfg.schedule;
    sch.seed = derive_seed(cfg.schedule.seed, k);
    seeds[k] = sch.seed;
    const double h = k == 0 ? 0.0 : cfg.tilt_h[k - 1];
    if (k > 0 && h == 0.0) return;  // same estimator as the critical run
    ModelParams p = ModelParams::scaled_field(beta, h, a, d);
    streams[k] = collect_tilt(g, p, sch, fs, d);
    if (run.log) run.log("tilt stream " + std::to_string(k) + " h=" + fmt(h) + " done");
  });
  const TiltStream& crit = streams[0];

  ResultRecord rec;
  rec.experiment_id = cfg.experiment_id;
  rec.config_hash = cfg.hash();
  nlohmann::json comparisons = nlohmann::json::array();
  int agree = 0;
  int total = 0;
  bool unreliable = false;
  auto row = [&](const std::string& obs, double h, const EstimateRecord& e) {
    rec.rows.push_back({cfg.experiment_id, obs, cfg.tilt_side, beta, "free", h, e.value, e.std_error, e.n_samples,
                        e.autocorrelation_time, cfg.schedule.seed});
  };

  const double scale = std::pow(a, (d + 2) / 2.0);
  for (std::size_t k = 0; k < cfg.tilt_h.size(); ++k) {
    const double h = cfg.tilt_h[k];
    const double field = h * scale;
    const TiltStream& direct = h == 0.0 ? crit : streams[1 + k];
    for (std::size_t f = 0; f < fs.size(); ++f) {
      const auto rw = tilt_reweight(crit.magnetization, crit.phi[f], field);
      unreliable = unreliable || !rw.reliable;
      EstimateRecord dm, dv;
      if (h == 0.0) {
        dm = rw.mean;
        dv = rw.variance;
      } else {
        dm = EstimateRecord::from_series(direct.phi[f]);
        dv = variance_estimate(direct.phi[f]);
      }
      // Gaussian form: <Phi(f)>_h = h Cov_0(Phi(f), M^a), Var unchanged
      std::vector<double> ma(crit.magnetization.size());
      for (std::size_t i = 0; i < ma.size(); ++i) ma[i] = scale * crit.magnetization[i];
      double cov = 0.0;
      {
        const double mf = mean(crit.phi[f]);
        const double mm = mean(ma);
        for (std::size_t i = 0; i < ma.size(); ++i) cov += (crit.phi[f][i] - mf) * (ma[i] - mm);
        cov /= static_cast<double>(ma.size() - 1);
      }
      const double zm = discrepancy(rw.mean, dm);
      const double zv = discrepancy(rw.variance, dv);
      total += 2;
      agree += (zm < 3.0) + (zv < 3.0);
      const std::string tag = fnames[f];
      row("phi_mean:" + tag + ":reweighted", h, rw.mean);
      row("phi_mean:" + tag + ":direct", h, dm);
      row("phi_var:" + tag + ":reweighted", h, rw.variance);
      row("phi_var:" + tag + ":direct", h, dv);

      nlohmann::json mgf = nlohmann::json::array();
      for (double t : cfg.mgf_t) {
        std::vector<double> e(crit.phi[f].size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::exp(t * crit.phi[f][i]);
        const auto rwm = tilt_reweight(crit.magnetization, e, field).mean;
        const auto dmm = h == 0.0 ? rwm : mgf_estimate(direct.phi[f], t);
        const double gauss = std::exp(t * h * cov + 0.5 * t * t * variance(crit.phi[f]));
        mgf.push_back({{"t", t}, {"reweighted", rwm.value}, {"reweighted_error", rwm.std_error},
                       {"direct", dmm.value}, {"direct_error", dmm.std_error}, {"gaussian_form", gauss},
                       {"z", discrepancy(rwm, dmm)}});
      }
      comparisons.push_back({{"h", h},
                             {"field", field},
                             {"test_function", tag},
                             {"mean", {{"reweighted", rw.mean.to_json()}, {"direct", dm.to_json()}, {"z", zm}}},
                             {"variance", {{"reweighted", rw.variance.to_json()}, {"direct", dv.to_json()}, {"z", zv}}},
                             {"gaussian_prediction", {{"mean", h * cov}, {"variance", variance(crit.phi[f])}}},
                             {"ess", rw.ess},
                             {"reliable", rw.reliable},
                             {"mgf", mgf}});
    }
  }
  rec.wall_clock_seconds = seconds_since(t0);
  rec.report = {{"config", cfg.to_json()},
                {"beta", beta},
                {"seeds", seeds},
                {"comparisons", comparisons},
                {"agree_within_3sigma", agree},
                {"comparisons_total", total},
                {"ess_flagged", unreliable},
                {"gaussian_control", gaussian_mgf_control(cfg.schedule.seed, cfg.mgf_t)}};
  if (!run.out_dir.empty()) {
    ensure_dir(run.out_dir);
    write_csv((std::filesystem::path(run.out_dir) / "results.csv").string(), rec.rows);
    write_json((std::filesystem::path(run.out_dir) / "tilt.json").string(), rec.to_json());
  }
  return rec;
}

// ---------------------------------------------------------------------------

nlohmann::json run_fit(const FitRequest& request) {
  if (request.files.empty()) throw std::invalid_argument("fit: no result files given");
  std::vector<ResultRow> rows;
  for (const auto& f : request.files) {
    auto r = read_csv(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  std::set<std::string> observables;
  for (const auto& r : rows) observables.insert(r.observable);
  std::string observable = request.observable;
  if (observable.empty()) {
    if (observables.size() != 1) {
      std::string list;
      for (const auto& o : observables) list += (list.empty() ? "" : ", ") + o;
      throw std::invalid_argument("fit: input mixes observables (" + list + "); choose one with --observable");
    }
    observable = *observables.begin();
  } else if (!observables.count(observable)) {
    throw std::invalid_argument("fit: observable '" + observable + "' not present in the input");
  }

  std::vector<FitPoint> pts;
  std::set<int> seen;
  for (const auto& r : rows) {
    if (r.observable != observable) continue;
    if (r.n < request.min_n || (request.max_n > 0 && r.n > request.max_n)) continue;
    if (!seen.insert(r.n).second)
      throw std::invalid_argument("fit: several rows for n = " + std::to_string(r.n) + " (mixed runs?)");
    pts.push_back({double(r.n), r.value, r.std_error});
  }
  if (pts.size() < 3)
    throw std::invalid_argument("fit: need at least 3 points, have " + std::to_string(pts.size()));
  const PowerLawFit fit = fit_power_law(pts);

  std::sort(pts.begin(), pts.end(), [](const FitPoint& a, const FitPoint& b) { return a.n < b.n; });
  if (!request.out_dir.empty()) {
    ensure_dir(request.out_dir);
    std::ofstream out(std::filesystem::path(request.out_dir) / "fit.csv");
    out << "n,value,error,fit\n";
    for (const auto& p : pts) out << fmt(p.n) << "," << fmt(p.value) << "," << fmt(p.error) << "," << fmt(fit.predict(p.n)) << "\n";
  }
  nlohmann::json j = fit.to_json();
  j["observable"] = observable;
  j["points"] = pts.size();
  return j;
}

}  // namespace ising
