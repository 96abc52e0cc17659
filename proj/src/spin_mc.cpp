#include "ising/spin_mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ising/statistics.hpp"

namespace ising {

SpinConfiguration SpinConfiguration::uniform(std::size_t n, int value) {
  if (value != 1 && value != -1) throw std::invalid_argument("spin value must be +1 or -1");
  return SpinConfiguration{std::vector<std::int8_t>(n, static_cast<std::int8_t>(value))};
}

SpinConfiguration SpinConfiguration::random(std::size_t n, Rng& rng) {
  SpinConfiguration c;
  c.spins.resize(n);
  for (auto& s : c.spins) s = (rng.next() >> 63) ? 1 : -1;
  return c;
}

long SpinConfiguration::magnetization() const {
  long m = 0;
  for (auto s : spins) m += s;
  return m;
}

void SpinConfiguration::validate(std::size_t vertex_count) const {
  if (spins.size() != vertex_count)
    throw std::invalid_argument("spin configuration has " + std::to_string(spins.size()) + " entries, graph has " +
                                std::to_string(vertex_count) + " vertices");
  for (auto s : spins)
    if (s != 1 && s != -1) throw std::invalid_argument("spin configuration entry is not +-1");
}

ModelParams ModelParams::scaled_field(double beta, double h, double a, int dimension) {
  ModelParams p{beta, h * std::pow(a, (dimension + 2) / 2.0), a};
  p.validate();
  return p;
}

void ModelParams::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
  if (!std::isfinite(field)) throw std::invalid_argument("field must be finite");
  if (!(lattice_spacing > 0.0)) throw std::invalid_argument("lattice spacing must be > 0");
}

nlohmann::json ModelParams::to_json() const {
  return {{"beta", beta}, {"field", field}, {"lattice_spacing", lattice_spacing}};
}

EnergyTerms energy_terms(const SpinConfiguration& c, const LatticeGraph& g) {
  c.validate(g.vertex_count());
  EnergyTerms t;
  for (const Edge& e : g.edges()) t.bond_sum += e.coupling * c.spins[e.u] * c.spins[e.v];
  t.magnetization = c.magnetization();
  return t;
}

ChainState ChainState::hot(const LatticeGraph& g, std::uint64_t seed) {
  ChainState s;
  s.rng = Rng(seed);
  s.configuration = SpinConfiguration::random(g.vertex_count(), s.rng);
  return s;
}

ChainState ChainState::cold(const LatticeGraph& g, std::uint64_t seed, int value) {
  ChainState s;
  s.rng = Rng(seed);
  s.configuration = SpinConfiguration::uniform(g.vertex_count(), value);
  return s;
}

std::string to_string(Sampler s) {
  switch (s) {
    case Sampler::metropolis: return "metropolis";
    case Sampler::wolff: return "wolff";
    case Sampler::hybrid: return "hybrid";
  }
  return "?";
}

Sampler sampler_from_string(const std::string& name) {
  if (name == "metropolis") return Sampler::metropolis;
  if (name == "wolff") return Sampler::wolff;
  if (name == "hybrid") return Sampler::hybrid;
  throw std::invalid_argument("unknown sampler '" + name + "' (expected metropolis|wolff|hybrid)");
}

// ---------------------------------------------------------------------------

Dynamics::Dynamics(const LatticeGraph& g, const ModelParams& p) : g_(&g), p_(p) {
  p.validate();
  if (g.vertex_count() >= std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("graph too large for 32-bit vertex indices");
  const std::size_t n = g.vertex_count();
  offsets_.resize(n + 1);
  offsets_[0] = 0;
  for (Vertex v = 0; v < n; ++v) {
    std::uint32_t deg = 0;
    for (const Incidence& inc : g.incident(v))
      if (g.coupling(inc.edge) != 0.0) ++deg;
    offsets_[v + 1] = offsets_[v] + deg;
  }
  neighbors_.resize(offsets_[n]);
  coupling_.resize(offsets_[n]);
  bond_prob_.resize(offsets_[n]);
  for (Vertex v = 0; v < n; ++v) {
    std::uint32_t k = offsets_[v];
    for (const Incidence& inc : g.incident(v)) {
      const double j = g.coupling(inc.edge);
      if (j == 0.0) continue;
      if (j < 0.0) throw std::invalid_argument("cluster dynamics need nonnegative couplings");
      neighbors_[k] = static_cast<std::uint32_t>(inc.neighbor);
      coupling_[k] = p.beta * j;
      bond_prob_[k] = -std::expm1(-2.0 * p.beta * j);
      ++k;
    }
  }
  ghost_keep_ = std::exp(-2.0 * std::abs(p.field));
  if (!bond_prob_.empty() &&
      std::all_of(bond_prob_.begin(), bond_prob_.end(), [&](double q) { return q == bond_prob_[0]; }))
    uniform_bond_prob_ = bond_prob_[0];
}

void Dynamics::metropolis_sweep(ChainState& s) {
  auto& spin = s.configuration.spins;
  const std::size_t n = spin.size();
  const double h = p_.field;
  for (std::size_t v = 0; v < n; ++v) {
    double local = h;
    for (std::uint32_t k = offsets_[v]; k < offsets_[v + 1]; ++k) local += coupling_[k] * spin[neighbors_[k]];
    const double delta = -2.0 * spin[v] * local;  // change of the log weight
    if (s.rng.uniform() * (1.0 + std::exp(-delta)) < 1.0) spin[v] = static_cast<std::int8_t>(-spin[v]);
  }
}

std::size_t Dynamics::wolff_update(ChainState& s) {
  auto& spin = s.configuration.spins;
  const auto seed = static_cast<std::uint32_t>(s.rng.below(spin.size()));
  const std::int8_t s0 = spin[seed];
  const auto flipped = static_cast<std::int8_t>(-s0);

  members_.clear();
  stack_.clear();
  spin[seed] = flipped;
  stack_.push_back(seed);
  members_.push_back(seed);
  const double q = uniform_bond_prob_;
  while (!stack_.empty()) {
    const std::uint32_t v = stack_.back();
    stack_.pop_back();
    for (std::uint32_t k = offsets_[v]; k < offsets_[v + 1]; ++k) {
      const std::uint32_t w = neighbors_[k];
      if (spin[w] != s0) continue;
      if (s.rng.uniform() < (q >= 0.0 ? q : bond_prob_[k])) {
        spin[w] = flipped;
        stack_.push_back(w);
        members_.push_back(w);
      }
    }
  }
  ++s.clusters;

  // Sites aligned with H may bond to the ghost; the cluster is frozen if any does.
  const bool aligned = (p_.field > 0.0 && s0 > 0) || (p_.field < 0.0 && s0 < 0);
  if (aligned) {
    const double keep = std::pow(ghost_keep_, static_cast<double>(members_.size()));
    if (!(s.rng.uniform() < keep))
      for (std::uint32_t v : members_) spin[v] = s0;
  }
  return members_.size();
}

void Dynamics::wolff_sweep(ChainState& s) {
  if (clusters_per_sweep_ > 0) {
    for (std::size_t i = 0; i < clusters_per_sweep_; ++i) wolff_update(s);
    return;
  }
  const std::size_t n = s.configuration.size();
  std::size_t covered = 0;
  while (covered < n) covered += wolff_update(s);
}

std::size_t Dynamics::calibrate(ChainState& s, std::size_t sweeps) {
  clusters_per_sweep_ = 0;
  const std::size_t n = s.configuration.size();
  std::size_t covered = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sweeps; ++i) {
    std::size_t here = 0;
    while (here < n) {
      here += wolff_update(s);
      ++count;
    }
    covered += here;
    ++s.sweeps;
  }
  const double mean_size = count ? static_cast<double>(covered) / static_cast<double>(count) : 1.0;
  clusters_per_sweep_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) / mean_size)));
  return clusters_per_sweep_;
}

void Dynamics::sweep(ChainState& s, Sampler sampler) {
  switch (sampler) {
    case Sampler::metropolis: metropolis_sweep(s); break;
    case Sampler::wolff: wolff_sweep(s); break;
    case Sampler::hybrid:
      wolff_sweep(s);
      metropolis_sweep(s);
      break;
  }
  ++s.sweeps;
}

void metropolis_sweep(ChainState& s, const LatticeGraph& g, const ModelParams& p) {
  s.configuration.validate(g.vertex_count());
  Dynamics(g, p).metropolis_sweep(s);
  ++s.sweeps;
}

std::size_t wolff_update(ChainState& s, const LatticeGraph& g, const ModelParams& p) {
  s.configuration.validate(g.vertex_count());
  return Dynamics(g, p).wolff_update(s);
}

// ---------------------------------------------------------------------------

void Schedule::validate() const {
  if (n_samples == 0) throw std::invalid_argument("schedule: n_samples must be positive");
  if (thinning == 0) throw std::invalid_argument("schedule: thinning must be positive");
  if (auto_burn_in && burn_in < 8) throw std::invalid_argument("schedule: auto burn-in needs a pilot of >= 8 sweeps");
}

nlohmann::json Schedule::to_json() const {
  return {{"burn_in", burn_in}, {"auto_burn_in", auto_burn_in}, {"n_samples", n_samples},
          {"thinning", thinning},  {"seed", seed},                 {"sampler", to_string(sampler)}};
}

Schedule Schedule::from_json(const nlohmann::json& j) {
  Schedule s;
  s.burn_in = j.value("burn_in", s.burn_in);
  s.auto_burn_in = j.value("auto_burn_in", s.auto_burn_in);
  s.n_samples = j.value("n_samples", s.n_samples);
  s.thinning = j.value("thinning", s.thinning);
  s.seed = j.value("seed", s.seed);
  s.sampler = sampler_from_string(j.value("sampler", to_string(s.sampler)));
  s.validate();
  return s;
}

nlohmann::json EnsembleMetadata::to_json() const {
  return {{"graph", graph},           {"graph_fingerprint", graph_fingerprint}, {"params", params.to_json()},
          {"schedule", schedule.to_json()}, {"burn_in_used", burn_in_used},
          {"clusters_per_sweep", clusters_per_sweep},      {"pilot_tau", pilot_tau}};
}

EnsembleMetadata sample_ensemble(const LatticeGraph& g, const ModelParams& p, const Schedule& schedule,
                                 const SampleObserver& observer) {
  p.validate();
  schedule.validate();
  EnsembleMetadata meta;
  meta.graph = g.to_json();
  meta.graph_fingerprint = g.fingerprint();
  meta.params = p;
  meta.schedule = schedule;

  Dynamics dyn(g, p);
  ChainState state = ChainState::hot(g, schedule.seed);
  std::uint64_t calibration = 0;
  if (schedule.sampler != Sampler::metropolis) {
    calibration = std::max<std::uint64_t>(10, schedule.burn_in / 2);
    meta.clusters_per_sweep = dyn.calibrate(state, calibration);
  }
  if (schedule.auto_burn_in) {
    std::vector<double> energy;
    energy.reserve(schedule.burn_in);
    for (std::uint64_t i = 0; i < schedule.burn_in; ++i) {
      dyn.sweep(state, schedule.sampler);
      energy.push_back(energy_terms(state.configuration, g).bond_sum);
    }
    meta.pilot_tau = integrated_autocorrelation_time(energy);
    const auto extra = static_cast<std::uint64_t>(std::ceil(10.0 * meta.pilot_tau));
    for (std::uint64_t i = 0; i < extra; ++i) dyn.sweep(state, schedule.sampler);
    meta.burn_in_used = calibration + schedule.burn_in + extra;
  } else {
    for (std::uint64_t i = 0; i < schedule.burn_in; ++i) dyn.sweep(state, schedule.sampler);
    meta.burn_in_used = calibration + schedule.burn_in;
  }

  for (std::uint64_t i = 0; i < schedule.n_samples; ++i) {
    for (std::uint64_t t = 0; t < schedule.thinning; ++t) dyn.sweep(state, schedule.sampler);
    observer(state.configuration, i);
  }
  return meta;
}

std::vector<SpinConfiguration> sample_ensemble(const LatticeGraph& g, const ModelParams& p,
                                               const Schedule& schedule) {
  std::vector<SpinConfiguration> out;
  out.reserve(schedule.n_samples);
  sample_ensemble(g, p, schedule, [&](const SpinConfiguration& c, std::uint64_t) { out.push_back(c); });
  return out;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kSpoolMagic[8] = {'I', 'S', 'P', 'O', 'O', 'L', '0', '1'};
}

struct SpoolWriter::Impl {
  std::ofstream out;
  std::size_t n = 0;
  std::vector<unsigned char> buffer;
};

SpoolWriter::SpoolWriter(const std::string& path, const EnsembleMetadata& meta, std::size_t vertex_count)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("cannot open spool file " + path);
  }
  impl_->n = vertex_count;
  impl_->buffer.resize((vertex_count + 7) / 8);
  nlohmann::json header = meta.to_json();
  header["vertex_count"] = vertex_count;
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  impl_->out.write(kSpoolMagic, sizeof kSpoolMagic);
  impl_->out.write(reinterpret_cast<const char*>(&len), sizeof len);
  impl_->out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

SpoolWriter::~SpoolWriter() {
  if (impl_) close();
}

void SpoolWriter::write(const SpinConfiguration& c) {
  if (!impl_) throw std::logic_error("spool already closed");
  c.validate(impl_->n);
  std::fill(impl_->buffer.begin(), impl_->buffer.end(), 0);
  for (std::size_t v = 0; v < impl_->n; ++v)
    if (c.spins[v] < 0) impl_->buffer[v / 8] |= static_cast<unsigned char>(1u << (v % 8));
  impl_->out.write(reinterpret_cast<const char*>(impl_->buffer.data()),
                   static_cast<std::streamsize>(impl_->buffer.size()));
}

void SpoolWriter::close() {
  if (!impl_) return;
  impl_->out.close();
  delete impl_;
  impl_ = nullptr;
}

Spool read_spool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open spool file " + path);
  char magic[sizeof kSpoolMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kSpoolMagic, sizeof magic) != 0)
    throw std::runtime_error(path + ": not a spool file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error(path + ": truncated header");

  Spool spool;
  spool.header = nlohmann::json::parse(text);
  const std::size_t n = spool.header.at("vertex_count").get<std::size_t>();
  std::vector<unsigned char> buffer((n + 7) / 8);
  while (in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()))) {
    SpinConfiguration c;
    c.spins.resize(n);
    for (std::size_t v = 0; v < n; ++v) c.spins[v] = (buffer[v / 8] >> (v % 8) & 1u) ? -1 : 1;
    spool.samples.push_back(std::move(c));
  }
  if (in.gcount() != 0) throw std::runtime_error(path + ": truncated record");
  return spool;
}

// ---------------------------------------------------------------------------

BinderCrossing binder_crossing(int dimension, const std::vector<int>& radii, const std::vector<double>& betas,
                               std::uint64_t samples, std::uint64_t seed) {
  if (radii.size() < 2) throw std::invalid_argument("binder_crossing needs at least two sizes");
  BinderCrossing out;
  std::vector<LatticeGraph> boxes;
  for (int r : radii) boxes.push_back(LatticeGraph::box(dimension, std::vector<int>(dimension, r), Boundary::periodic));

  std::uint64_t stream = 0;
  for (double beta : betas) {
    BinderPoint point{beta, {}};
    for (const LatticeGraph& g : boxes) {
      Schedule sch;
      sch.burn_in = std::max<std::uint64_t>(50, samples / 10);
      sch.n_samples = samples;
      sch.seed = derive_seed(seed, stream++);
      sch.sampler = Sampler::wolff;
      double m2 = 0.0;
      double m4 = 0.0;
      const double v = static_cast<double>(g.vertex_count());
      sample_ensemble(g, ModelParams{beta, 0.0, 1.0}, sch, [&](const SpinConfiguration& c, std::uint64_t) {
        const double m = static_cast<double>(c.magnetization()) / v;
        m2 += m * m;
        m4 += m * m * m * m;
      });
      m2 /= static_cast<double>(samples);
      m4 /= static_cast<double>(samples);
      point.binder.push_back(1.0 - m4 / (3.0 * m2 * m2));
    }
    out.curve.push_back(point);
  }

  out.beta_cross = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i < out.curve.size(); ++i) {
    const double a = out.curve[i - 1].binder.back() - out.curve[i - 1].binder.front();
    const double b = out.curve[i].binder.back() - out.curve[i].binder.front();
    if (a <= 0.0 && b > 0.0) {
      const double t = a / (a - b);
      out.beta_cross = out.curve[i - 1].beta + t * (out.curve[i].beta - out.curve[i - 1].beta);
      break;
    }
  }
  return out;
}

}  // namespace ising
