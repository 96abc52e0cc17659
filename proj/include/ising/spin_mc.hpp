#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ising/lattice.hpp"
#include "ising/rng.hpp"
#include "json.hpp"

namespace ising {

struct SpinConfiguration {
  std::vector<std::int8_t> spins;

  static SpinConfiguration uniform(std::size_t n, int value);
  static SpinConfiguration random(std::size_t n, Rng& rng);

  std::size_t size() const { return spins.size(); }
  int operator[](Vertex v) const { return spins[v]; }
  long magnetization() const;
  /// Throws std::invalid_argument on a size mismatch or a non +-1 entry.
  void validate(std::size_t vertex_count) const;

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;
};

struct ModelParams {
  double beta = 0.0;
  double field = 0.0;  // H
  double lattice_spacing = 1.0;

  /// H = h * a^{(d+2)/2}.
  static ModelParams scaled_field(double beta, double h, double a, int dimension);
  void validate() const;
  nlohmann::json to_json() const;
};

struct EnergyTerms {
  double bond_sum = 0.0;     // sum_{xy} J_xy s_x s_y
  long magnetization = 0;    // sum_x s_x
};

EnergyTerms energy_terms(const SpinConfiguration& c, const LatticeGraph& g);

struct ChainState {
  SpinConfiguration configuration;
  Rng rng;
  std::uint64_t sweeps = 0;
  std::uint64_t clusters = 0;

  /// Random initial spins drawn from the chain's own generator.
  static ChainState hot(const LatticeGraph& g, std::uint64_t seed);
  static ChainState cold(const LatticeGraph& g, std::uint64_t seed, int value = 1);

  friend bool operator==(const ChainState& a, const ChainState& b) {
    return a.configuration == b.configuration && a.rng == b.rng && a.sweeps == b.sweeps &&
           a.clusters == b.clusters;
  }
};

enum class Sampler { metropolis, wolff, hybrid };

std::string to_string(Sampler s);
Sampler sampler_from_string(const std::string& name);

/// Update kernels with tables precomputed for one (graph, parameters)
/// pair. The field enters cluster moves through a ghost spin: a grown
/// cluster is flipped only if none of its sites aligned with H bonds to
/// the ghost. Holds scratch buffers: one instance per thread.
class Dynamics {
 public:
  Dynamics(const LatticeGraph& g, const ModelParams& p);

  const LatticeGraph& graph() const { return *g_; }
  const ModelParams& params() const { return p_; }

  /// One sequential pass of single-site flip proposals, accepted with
  /// the Barker rule 1 / (1 + exp(-dlogW)).
  void metropolis_sweep(ChainState& s);
  /// Grows one cluster from a random seed site. Returns its size; the
  /// flip may be vetoed by the ghost spin, in which case spins are kept.
  std::size_t wolff_update(ChainState& s);
  /// A fixed number of clusters (see calibrate); |V| / <cluster size>
  /// on average. Before calibration falls back to stopping once the
  /// cumulative size reaches |V|, which biases the chain: burn-in only.
  void wolff_sweep(ChainState& s);
  /// Runs `sweeps` stopping-rule sweeps and fixes the clusters per sweep
  /// to round(|V| / mean cluster size). Returns that count.
  std::size_t calibrate(ChainState& s, std::size_t sweeps);
  void set_clusters_per_sweep(std::size_t k) { clusters_per_sweep_ = k; }
  std::size_t clusters_per_sweep() const { return clusters_per_sweep_; }
  /// One sweep-equivalent of the chosen sampler. Hybrid does a Wolff
  /// sweep followed by a Metropolis sweep.
  void sweep(ChainState& s, Sampler sampler);

 private:
  const LatticeGraph* g_;
  ModelParams p_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> neighbors_;
  std::vector<double> coupling_;    // beta * J per incidence
  std::vector<double> bond_prob_;   // 1 - exp(-2 beta J) per incidence
  double ghost_keep_ = 1.0;         // exp(-2|H|)
  double uniform_bond_prob_ = -1.0;  // shared value when all couplings agree, else -1
  std::size_t clusters_per_sweep_ = 0;
  std::vector<std::uint32_t> stack_;
  std::vector<std::uint32_t> members_;
};

void metropolis_sweep(ChainState& s, const LatticeGraph& g, const ModelParams& p);
std::size_t wolff_update(ChainState& s, const LatticeGraph& g, const ModelParams& p);

struct Schedule {
  std::uint64_t burn_in = 100;  // sweeps
  bool auto_burn_in = false;    // burn_in becomes a pilot length; 10 tau more are added
  std::uint64_t n_samples = 1000;
  std::uint64_t thinning = 1;   // sweeps between samples
  std::uint64_t seed = 0;
  Sampler sampler = Sampler::wolff;

  void validate() const;
  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);
};

struct EnsembleMetadata {
  std::string graph_fingerprint;
  nlohmann::json graph;
  ModelParams params;
  Schedule schedule;
  std::uint64_t burn_in_used = 0;
  std::uint64_t clusters_per_sweep = 0;  // 0 for metropolis
  double pilot_tau = 0.0;  // tau of the energy in the auto burn-in pilot

  nlohmann::json to_json() const;
};

using SampleObserver = std::function<void(const SpinConfiguration&, std::uint64_t index)>;

/// Runs burn-in, then hands n_samples configurations to `observer`.
/// Equal seeds reproduce the stream bit for bit.
EnsembleMetadata sample_ensemble(const LatticeGraph& g, const ModelParams& p, const Schedule& schedule,
                                 const SampleObserver& observer);

std::vector<SpinConfiguration> sample_ensemble(const LatticeGraph& g, const ModelParams& p,
                                               const Schedule& schedule);

/// Binary spool: magic, header JSON, then one packed bitplane per sample
/// (bit set means spin -1).
class SpoolWriter {
 public:
  SpoolWriter(const std::string& path, const EnsembleMetadata& meta, std::size_t vertex_count);
  ~SpoolWriter();
  SpoolWriter(const SpoolWriter&) = delete;
  SpoolWriter& operator=(const SpoolWriter&) = delete;

  void write(const SpinConfiguration& c);
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

struct Spool {
  nlohmann::json header;
  std::vector<SpinConfiguration> samples;
};

Spool read_spool(const std::string& path);

struct BinderPoint {
  double beta = 0.0;
  std::vector<double> binder;  // one per size
};

struct BinderCrossing {
  std::vector<BinderPoint> curve;
  double beta_cross = 0.0;  // NaN when the curves do not cross in range
};

/// Locates the crossing of U = 1 - <m^4>/(3<m^2>^2) for periodic boxes of
/// the given radii over a beta grid (linear interpolation of the first
/// sign change of U_large - U_small).
BinderCrossing binder_crossing(int dimension, const std::vector<int>& radii, const std::vector<double>& betas,
                               std::uint64_t samples, std::uint64_t seed);

}  // namespace ising
