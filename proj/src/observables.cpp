#include "ising/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ising/statistics.hpp"
#include "ising/summation.hpp"

namespace ising {

EstimateRecord EstimateRecord::from_series(std::span<const double> series, std::uint64_t seed) {
  if (series.empty()) throw std::invalid_argument("estimate from an empty stream");
  const BatchMeansResult b = batch_means(series);
  EstimateRecord r;
  r.value = b.mean;
  r.std_error = b.std_error;
  r.n_samples = series.size();
  r.autocorrelation_time = integrated_autocorrelation_time(series);
  r.seeds = {seed};
  return r;
}

EstimateRecord EstimateRecord::merged(const EstimateRecord& other) const {
  if (n_samples == 0) return other;
  if (other.n_samples == 0) return *this;
  EstimateRecord r;
  r.n_samples = n_samples + other.n_samples;
  const double n = static_cast<double>(r.n_samples);
  const double wa = static_cast<double>(n_samples) / n;
  const double wb = static_cast<double>(other.n_samples) / n;
  r.value = wa * value + wb * other.value;
  r.std_error = std::hypot(wa * std_error, wb * other.std_error);
  r.autocorrelation_time = wa * autocorrelation_time + wb * other.autocorrelation_time;
  r.seeds = seeds;
  r.seeds.insert(r.seeds.end(), other.seeds.begin(), other.seeds.end());
  std::sort(r.seeds.begin(), r.seeds.end());
  return r;
}

nlohmann::json EstimateRecord::to_json() const {
  return {{"value", value},
          {"std_error", std_error},
          {"n_samples", n_samples},
          {"autocorrelation_time", autocorrelation_time},
          {"seeds", seeds}};
}

double discrepancy(const EstimateRecord& a, const EstimateRecord& b) {
  const double err = std::hypot(a.std_error, b.std_error);
  const double diff = std::abs(a.value - b.value);
  if (err == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / err;
}

std::map<VertexPair, EstimateRecord> two_point_table(std::span<const SpinConfiguration> samples,
                                                     const std::vector<VertexPair>& pairs, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("two_point_table: empty stream");
  std::map<VertexPair, EstimateRecord> out;
  std::vector<double> series(samples.size());
  for (const auto& [x, y] : pairs) {
    if (x >= samples[0].size() || y >= samples[0].size())
      throw std::invalid_argument("two_point_table: pair outside the graph");
    for (std::size_t i = 0; i < samples.size(); ++i) series[i] = samples[i][x] * samples[i][y];
    out[{x, y}] = EstimateRecord::from_series(series, seed);
  }
  return out;
}

nlohmann::json SusceptibilityRecord::to_json() const {
  return {{"n", n}, {"beta", beta}, {"bc", to_string(bc)}, {"chi", chi.to_json()}};
}

SusceptibilityRecord susceptibility(std::span<const SpinConfiguration> samples, const LatticeGraph& g, int n,
                                    const ModelParams& p, std::uint64_t seed) {
  if (p.field != 0.0) throw std::invalid_argument("susceptibility: stream must be sampled at H = 0");
  if (samples.empty()) throw std::invalid_argument("susceptibility: empty stream");
  const double v = static_cast<double>(g.vertex_count());
  std::vector<double> series;
  series.reserve(samples.size());
  for (const auto& c : samples) {
    c.validate(g.vertex_count());
    const double m = static_cast<double>(c.magnetization());
    series.push_back(m * m / v);
  }
  return {n, p.beta, g.boundary(), EstimateRecord::from_series(series, seed)};
}

double chi_pair_sum(std::span<const SpinConfiguration> samples, const LatticeGraph& g) {
  if (samples.empty()) throw std::invalid_argument("chi_pair_sum: empty stream");
  const std::size_t n = g.vertex_count();
  CompensatedSum total;
  for (const auto& c : samples) {
    long s = 0;
    for (Vertex x = 0; x < n; ++x)
      for (Vertex y = 0; y < n; ++y) s += c[x] * c[y];
    total += static_cast<double>(s);
  }
  return total.value() / static_cast<double>(n) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------

namespace {

struct Frame {
  std::vector<double> centre;
  std::vector<double> half;
};

Frame frame(const LatticeGraph& g) {
  Frame f;
  for (int i = 0; i < g.dimension(); ++i) {
    f.centre.push_back(0.5 * (g.lower()[i] + g.upper()[i]));
    f.half.push_back(0.5 * (g.upper()[i] - g.lower()[i]));
  }
  return f;
}

}  // namespace

TestFunction indicator_function(const LatticeGraph& g, double half_width) {
  const Frame fr = frame(g);
  TestFunction f(g.vertex_count(), 0.0);
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    const Coord x = g.coord(v);
    bool inside = true;
    for (int i = 0; i < g.dimension(); ++i) inside = inside && std::abs(x[i] - fr.centre[i]) <= half_width;
    f[v] = inside ? 1.0 : 0.0;
  }
  return f;
}

TestFunction bump_function(const LatticeGraph& g) {
  const Frame fr = frame(g);
  TestFunction f(g.vertex_count(), 1.0);
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    const Coord x = g.coord(v);
    for (int i = 0; i < g.dimension(); ++i)
      f[v] *= std::cos(std::numbers::pi * (x[i] - fr.centre[i]) / (2.0 * (fr.half[i] + 1.0)));
  }
  return f;
}

TestFunction coordinate_function(const LatticeGraph& g, int axis) {
  if (axis < 0 || axis >= g.dimension()) throw std::invalid_argument("coordinate_function: bad axis");
  const Frame fr = frame(g);
  TestFunction f(g.vertex_count());
  for (Vertex v = 0; v < g.vertex_count(); ++v) f[v] = (g.coord(v)[axis] - fr.centre[axis]) / (fr.half[axis] + 1.0);
  return f;
}

double field_functional(const SpinConfiguration& c, const TestFunction& f, double a, int dimension) {
  if (f.size() != c.size()) throw std::invalid_argument("field_functional: test function size mismatch");
  CompensatedSum s;
  for (std::size_t v = 0; v < f.size(); ++v) s += f[v] * c[v];
  return std::pow(a, (dimension + 2) / 2.0) * s.value();
}

std::vector<double> field_series(std::span<const SpinConfiguration> samples, const TestFunction& f, double a,
                                 int dimension) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& c : samples) out.push_back(field_functional(c, f, a, dimension));
  return out;
}

// ---------------------------------------------------------------------------
// Jackknife helpers: sums of a few per-sample quantities per block, and
// leave-one-block-out estimates from the totals.

namespace {

struct BlockSums {
  std::vector<std::vector<double>> sums;  // [block][quantity]
  std::vector<double> counts;
  std::vector<double> total;
  double count = 0.0;
};

template <class PerSample>
BlockSums block_sums(std::size_t n, std::size_t blocks, std::size_t quantities, PerSample per_sample) {
  if (n == 0) throw std::invalid_argument("empty stream");
  blocks = std::max<std::size_t>(1, std::min(blocks, n));
  BlockSums b;
  b.sums.assign(blocks, std::vector<double>(quantities, 0.0));
  b.counts.assign(blocks, 0.0);
  std::vector<double> q(quantities);
  const std::size_t size = n / blocks;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = std::min(i / size, blocks - 1);
    per_sample(i, q);
    for (std::size_t j = 0; j < quantities; ++j) b.sums[k][j] += q[j];
    b.counts[k] += 1.0;
  }
  b.total.assign(quantities, 0.0);
  for (std::size_t k = 0; k < blocks; ++k) {
    for (std::size_t j = 0; j < quantities; ++j) b.total[j] += b.sums[k][j];
    b.count += b.counts[k];
  }
  return b;
}

// Full-sample estimate plus jackknife error for an estimator of the block totals.
template <class Estimator>
std::pair<double, double> jackknife(const BlockSums& b, Estimator est) {
  const double full = est(b.total, b.count);
  if (b.sums.size() < 2) return {full, 0.0};
  std::vector<double> loo;
  std::vector<double> t(b.total.size());
  for (std::size_t k = 0; k < b.sums.size(); ++k) {
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = b.total[j] - b.sums[k][j];
    loo.push_back(est(t, b.count - b.counts[k]));
  }
  return {full, jackknife_error(loo)};
}

}  // namespace

EstimateRecord variance_estimate(std::span<const double> x, std::size_t blocks) {
  const double shift = x.empty() ? 0.0 : x[0];
  const auto b = block_sums(x.size(), blocks, 2, [&](std::size_t i, std::vector<double>& q) {
    const double d = x[i] - shift;
    q[0] = d;
    q[1] = d * d;
  });
  const auto [v, e] = jackknife(b, [](const std::vector<double>& t, double n) {
    const double m = t[0] / n;
    return (t[1] / n - m * m) * n / std::max(n - 1.0, 1.0);
  });
  EstimateRecord r;
  r.value = v;
  r.std_error = e;
  r.n_samples = x.size();
  return r;
}

EstimateRecord covariance_estimate(std::span<const SpinConfiguration> samples, const TestFunction& f,
                                   const TestFunction& g, double a, int dimension, std::size_t blocks) {
  const auto pf = field_series(samples, f, a, dimension);
  const auto pg = field_series(samples, g, a, dimension);
  const auto b = block_sums(samples.size(), blocks, 3, [&](std::size_t i, std::vector<double>& q) {
    q[0] = pf[i];
    q[1] = pg[i];
    q[2] = pf[i] * pg[i];
  });
  const auto [v, e] = jackknife(b, [](const std::vector<double>& t, double n) {
    return (t[2] / n - t[0] / n * t[1] / n) * n / std::max(n - 1.0, 1.0);
  });
  EstimateRecord r;
  r.value = v;
  r.std_error = e;
  r.n_samples = samples.size();
  return r;
}

TiltResult tilt_reweight(std::span<const double> magnetization, std::span<const double> values, double field,
                         const TiltOptions& options) {
  if (magnetization.size() != values.size()) throw std::invalid_argument("tilt_reweight: series length mismatch");
  if (values.empty()) throw std::invalid_argument("tilt_reweight: empty stream");
  const std::size_t n = values.size();
  double peak = -std::numeric_limits<double>::infinity();
  for (double m : magnetization) peak = std::max(peak, field * m);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(field * magnetization[i] - peak);

  const auto b = block_sums(n, options.blocks, 4, [&](std::size_t i, std::vector<double>& q) {
    q[0] = w[i];
    q[1] = w[i] * values[i];
    q[2] = w[i] * values[i] * values[i];
    q[3] = w[i] * w[i];
  });
  const auto [m, me] = jackknife(b, [](const std::vector<double>& t, double) { return t[1] / t[0]; });
  const auto [v, ve] = jackknife(b, [](const std::vector<double>& t, double) {
    const double mu = t[1] / t[0];
    return t[2] / t[0] - mu * mu;
  });

  TiltResult r;
  r.mean.value = field == 0.0 ? mean(values) : m;  // unit weights: summed in sample order
  r.mean.std_error = me;
  r.mean.n_samples = n;
  r.variance.value = v;
  r.variance.std_error = ve;
  r.variance.n_samples = n;
  r.ess = b.total[0] * b.total[0] / b.total[3];
  r.reliable = r.ess >= options.min_ess_fraction * static_cast<double>(n);
  return r;
}

EstimateRecord mgf_estimate(std::span<const double> phi, double t, std::uint64_t seed) {
  if (phi.empty()) throw std::invalid_argument("mgf_estimate: empty stream");
  double peak = -std::numeric_limits<double>::infinity();
  for (double p : phi) peak = std::max(peak, t * p);
  std::vector<double> w(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) w[i] = std::exp(t * phi[i] - peak);
  EstimateRecord r = EstimateRecord::from_series(w, seed);
  const double scale = std::exp(peak);
  r.value *= scale;
  r.std_error *= scale;
  return r;
}

nlohmann::json CumulantDiagnostics::to_json() const {
  return {{"variance", variance},
          {"variance_error", variance_error},
          {"excess_kurtosis", excess_kurtosis},
          {"excess_kurtosis_error", excess_kurtosis_error},
          {"binder", binder},
          {"binder_error", binder_error}};
}

CumulantDiagnostics cumulant_diagnostics(std::span<const double> values, std::size_t blocks) {
  const auto b = block_sums(values.size(), blocks, 4, [&](std::size_t i, std::vector<double>& q) {
    const double x = values[i];
    q[0] = x;
    q[1] = x * x;
    q[2] = x * x * x;
    q[3] = x * x * x * x;
  });
  auto central = [](const std::vector<double>& t, double n) {
    const double m1 = t[0] / n;
    const double r2 = t[1] / n;
    const double r3 = t[2] / n;
    const double r4 = t[3] / n;
    const double c2 = r2 - m1 * m1;
    const double c4 = r4 - 4 * m1 * r3 + 6 * m1 * m1 * r2 - 3 * m1 * m1 * m1 * m1;
    return std::pair{c2, c4};
  };
  CumulantDiagnostics d;
  std::tie(d.variance, d.variance_error) =
      jackknife(b, [&](const std::vector<double>& t, double n) { return central(t, n).first; });
  std::tie(d.excess_kurtosis, d.excess_kurtosis_error) = jackknife(b, [&](const std::vector<double>& t, double n) {
    const auto [c2, c4] = central(t, n);
    return c4 / (c2 * c2) - 3.0;
  });
  std::tie(d.binder, d.binder_error) = jackknife(b, [](const std::vector<double>& t, double n) {
    const double r2 = t[1] / n;
    return 1.0 - (t[3] / n) / (3.0 * r2 * r2);
  });
  return d;
}

// ---------------------------------------------------------------------------

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_var = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  bool weighted = true;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w,
                 bool weighted) {
  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  const double det = s * sxx - sx * sx;
  if (!(det > 0.0)) throw std::invalid_argument("fit: abscissae must not all coincide");
  LineFit f;
  f.slope = (s * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.slope_var = s / det;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    f.chi2 += w[i] * r * r;
  }
  f.dof = static_cast<int>(x.size()) - 2;
  f.weighted = weighted;
  if (weighted) {
    if (f.dof > 0 && f.chi2 / f.dof > 1.0) f.slope_var *= f.chi2 / f.dof;
  } else {
    f.slope_var *= f.dof > 0 ? f.chi2 / f.dof : 0.0;
  }
  return f;
}

// Log-transformed data and weights; `log_x` selects power law vs exponential.
void prepare(std::span<const FitPoint> points, bool log_x, std::vector<double>& x, std::vector<double>& y,
             std::vector<double>& w, bool& weighted) {
  if (points.size() < 3) throw std::invalid_argument("fit needs at least 3 points");
  std::size_t zero = 0;
  for (const auto& p : points) {
    if (!(p.value > 0.0)) throw std::invalid_argument("fit: values must be positive");
    if (log_x && !(p.n > 0.0)) throw std::invalid_argument("fit: abscissae must be positive");
    if (p.error < 0.0) throw std::invalid_argument("fit: negative error");
    zero += p.error == 0.0;
  }
  if (zero != 0 && zero != points.size()) throw std::invalid_argument("fit: mixed zero and positive errors");
  weighted = zero == 0;
  for (const auto& p : points) {
    x.push_back(log_x ? std::log(p.n) : p.n);
    y.push_back(std::log(p.value));
    const double s = p.error / p.value;
    w.push_back(weighted ? 1.0 / (s * s) : 1.0);
  }
}

}  // namespace

double PowerLawFit::predict(double n) const { return amplitude * std::pow(n, exponent); }

nlohmann::json PowerLawFit::to_json() const {
  return {{"exponent", exponent}, {"exponent_error", exponent_error}, {"amplitude", amplitude},
          {"chi2", chi2},         {"dof", dof},                       {"window_exponents", window_exponents},
          {"window_shift", window_shift}};
}

PowerLawFit fit_power_law(std::span<const FitPoint> points) {
  std::vector<FitPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const FitPoint& a, const FitPoint& b) { return a.n < b.n; });
  std::vector<double> x, y, w;
  bool weighted = true;
  prepare(sorted, true, x, y, w, weighted);
  const LineFit f = fit_line(x, y, w, weighted);
  PowerLawFit out;
  out.exponent = f.slope;
  out.exponent_error = std::sqrt(f.slope_var);
  out.amplitude = std::exp(f.intercept);
  out.chi2 = f.chi2;
  out.dof = f.dof;
  for (std::size_t drop = 1; sorted.size() - drop >= 3; ++drop) {
    const std::vector<double> xs(x.begin() + static_cast<long>(drop), x.end());
    const std::vector<double> ys(y.begin() + static_cast<long>(drop), y.end());
    const std::vector<double> ws(w.begin() + static_cast<long>(drop), w.end());
    const double e = fit_line(xs, ys, ws, weighted).slope;
    out.window_exponents.push_back(e);
    out.window_shift = std::max(out.window_shift, std::abs(e - out.exponent));
  }
  return out;
}

ExponentialFit fit_exponential(std::span<const FitPoint> points) {
  std::vector<double> x, y, w;
  bool weighted = true;
  prepare(points, false, x, y, w, weighted);
  const LineFit f = fit_line(x, y, w, weighted);
  ExponentialFit out;
  out.rate = -f.slope;
  out.rate_error = std::sqrt(f.slope_var);
  out.amplitude = std::exp(f.intercept);
  out.chi2 = f.chi2;
  out.dof = f.dof;
  return out;
}

}  // namespace ising
