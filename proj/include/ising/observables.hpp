#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "ising/lattice.hpp"
#include "ising/spin_mc.hpp"
#include "json.hpp"

namespace ising {

struct EstimateRecord {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  double autocorrelation_time = 0.5;
  std::vector<std::uint64_t> seeds;  // sorted

  /// Mean of a time series with batch-means error and windowed tau.
  static EstimateRecord from_series(std::span<const double> series, std::uint64_t seed = 0);

  /// Combination over disjoint sample sets: sample-weighted mean, errors
  /// added in quadrature with the same weights.
  EstimateRecord merged(const EstimateRecord& other) const;

  nlohmann::json to_json() const;
};

/// Error-weighted z score |a - b| / sqrt(ea^2 + eb^2).
double discrepancy(const EstimateRecord& a, const EstimateRecord& b);

using VertexPair = std::pair<Vertex, Vertex>;

std::map<VertexPair, EstimateRecord> two_point_table(std::span<const SpinConfiguration> samples,
                                                     const std::vector<VertexPair>& pairs, std::uint64_t seed = 0);

struct SusceptibilityRecord {
  int n = 0;
  double beta = 0.0;
  Boundary bc = Boundary::free;
  EstimateRecord chi;

  nlohmann::json to_json() const;
};

/// chi_n = <M^2> / |V| from an H = 0 stream. Rejects H != 0.
SusceptibilityRecord susceptibility(std::span<const SpinConfiguration> samples, const LatticeGraph& g, int n,
                                    const ModelParams& p, std::uint64_t seed = 0);

/// Same quantity through the explicit pair sum sum_{x,y} s_x s_y / |V|.
double chi_pair_sum(std::span<const SpinConfiguration> samples, const LatticeGraph& g);

using TestFunction = std::vector<double>;

/// 1 on sites with |x_i - c_i| <= half_width for every axis, c the box centre.
TestFunction indicator_function(const LatticeGraph& g, double half_width);
/// prod_i cos(pi (x_i - c_i) / (2 (R_i + 1))), R_i the half side.
TestFunction bump_function(const LatticeGraph& g);
/// (x_axis - c_axis) / (R_axis + 1).
TestFunction coordinate_function(const LatticeGraph& g, int axis);

/// a^{(d+2)/2} sum_x f(x) s_x.
double field_functional(const SpinConfiguration& c, const TestFunction& f, double a, int dimension);

/// Per-sample values of the field functional.
std::vector<double> field_series(std::span<const SpinConfiguration> samples, const TestFunction& f, double a,
                                 int dimension);

/// Sample variance with a jackknife error over `blocks` blocks.
EstimateRecord variance_estimate(std::span<const double> x, std::size_t blocks = 32);

/// Cov(Phi(f), Phi(g)) with a jackknife error.
EstimateRecord covariance_estimate(std::span<const SpinConfiguration> samples, const TestFunction& f,
                                   const TestFunction& g, double a, int dimension, std::size_t blocks = 32);

struct TiltOptions {
  double min_ess_fraction = 0.05;
  std::size_t blocks = 32;
};

struct TiltResult {
  EstimateRecord mean;      // <F>_H
  EstimateRecord variance;  // <F^2>_H - <F>_H^2
  double ess = 0.0;         // (sum w)^2 / sum w^2
  bool reliable = true;
};

/// Reweights an H = 0 stream to field H with weights exp(H M), M the
/// total magnetization (equivalently exp(h M^a) with H = h a^{(d+2)/2}).
/// Errors by jackknife over contiguous blocks.
TiltResult tilt_reweight(std::span<const double> magnetization, std::span<const double> values, double field,
                         const TiltOptions& options = {});

/// <exp(t Phi)> with the exponent shifted by its maximum.
EstimateRecord mgf_estimate(std::span<const double> phi, double t, std::uint64_t seed = 0);

struct CumulantDiagnostics {
  double variance = 0.0;
  double variance_error = 0.0;
  double excess_kurtosis = 0.0;
  double excess_kurtosis_error = 0.0;
  double binder = 0.0;  // 1 - <m^4> / (3 <m^2>^2), raw moments
  double binder_error = 0.0;

  nlohmann::json to_json() const;
};

CumulantDiagnostics cumulant_diagnostics(std::span<const double> values, std::size_t blocks = 32);

struct FitPoint {
  double n = 0.0;
  double value = 0.0;
  double error = 0.0;
};

struct PowerLawFit {
  double exponent = 0.0;
  double exponent_error = 0.0;  // scaled by sqrt(chi2/dof) when that exceeds 1
  double amplitude = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  /// Exponents refitted after dropping the 1, 2, ... smallest n (while
  /// at least three points remain).
  std::vector<double> window_exponents;
  /// Largest |refit - exponent|.
  double window_shift = 0.0;

  double predict(double n) const;
  nlohmann::json to_json() const;
};

/// Weighted least squares of log value on log n. Points with zero error
/// get unit weight when every error is zero.
PowerLawFit fit_power_law(std::span<const FitPoint> points);

struct ExponentialFit {
  double rate = 0.0;  // value ~ A exp(-rate n)
  double rate_error = 0.0;
  double amplitude = 0.0;
  double chi2 = 0.0;
  int dof = 0;
};

ExponentialFit fit_exponential(std::span<const FitPoint> points);

}  // namespace ising
