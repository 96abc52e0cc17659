#include "ising/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ising/summation.hpp"

namespace ising {

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of an empty series");
  CompensatedSum s;
  for (double v : x) s += v;
  return s.value() / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  CompensatedSum s;
  for (double v : x) s += (v - m) * (v - m);
  return s.value() / static_cast<double>(x.size() - 1);
}

double integrated_autocorrelation_time(std::span<const double> x, double c) {
  const std::size_t n = x.size();
  if (n < 4) return 0.5;
  const double m = mean(x);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - m;
  double c0 = 0.0;
  for (double v : d) c0 += v * v;
  c0 /= static_cast<double>(n);
  if (!(c0 > 0.0)) return 0.5;

  double tau = 0.5;
  for (std::size_t t = 1; t < n / 2; ++t) {
    double ct = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) ct += d[i] * d[i + t];
    ct /= static_cast<double>(n);
    tau += ct / c0;
    if (static_cast<double>(t) >= c * tau) break;
  }
  return std::max(tau, 0.5);
}

std::vector<double> block_means(std::span<const double> x, std::size_t blocks) {
  if (blocks == 0 || x.size() < blocks) throw std::invalid_argument("block_means: not enough samples");
  const std::size_t size = x.size() / blocks;
  std::vector<double> out;
  out.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t begin = b * size;
    const std::size_t end = b + 1 == blocks ? x.size() : begin + size;
    out.push_back(mean(x.subspan(begin, end - begin)));
  }
  return out;
}

namespace {

double batch_error(std::span<const double> x, std::size_t b) {
  const std::size_t k = x.size() / b;
  std::vector<double> means(k);
  for (std::size_t i = 0; i < k; ++i) means[i] = mean(x.subspan(i * b, b));
  return std::sqrt(variance(means) / static_cast<double>(k));
}

}  // namespace

BatchMeansResult batch_means(std::span<const double> x, std::size_t min_batches) {
  if (x.empty()) throw std::invalid_argument("batch_means: empty series");
  BatchMeansResult r;
  r.mean = mean(x);
  r.batches = x.size();
  if (x.size() < 2) return r;
  min_batches = std::max<std::size_t>(min_batches, 2);

  std::size_t b = 1;
  double err = batch_error(x, 1);
  while (x.size() / (2 * b) >= min_batches) {
    const double next = batch_error(x, 2 * b);
    if (next < 1.03 * err) {
      err = std::max(err, next);
      b *= 2;
      break;
    }
    err = next;
    b *= 2;
  }
  r.std_error = err;
  r.batch_size = b;
  r.batches = x.size() / b;
  return r;
}

double jackknife_error(std::span<const double> leave_one_out) {
  const std::size_t k = leave_one_out.size();
  if (k < 2) return 0.0;
  const double m = mean(leave_one_out);
  CompensatedSum s;
  for (double v : leave_one_out) s += (v - m) * (v - m);
  return std::sqrt(static_cast<double>(k - 1) / static_cast<double>(k) * s.value());
}

}  // namespace ising
