#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ising {

/// Integrated autocorrelation time with a self-consistent window: the
/// smallest W with W >= c * tau(W). Returns 0.5 for uncorrelated or
/// constant series.
double integrated_autocorrelation_time(std::span<const double> x, double c = 6.0);

struct BatchMeansResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t batch_size = 1;
  std::size_t batches = 0;
};

/// Non-overlapping batch means. The batch size doubles until the error
/// estimate stops growing or fewer than `min_batches` batches remain.
BatchMeansResult batch_means(std::span<const double> x, std::size_t min_batches = 32);

/// Splits `x` into `blocks` contiguous blocks (the last absorbs the
/// remainder) and returns their means.
std::vector<double> block_means(std::span<const double> x, std::size_t blocks);

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // unbiased

/// Jackknife standard error from leave-one-block-out estimates.
double jackknife_error(std::span<const double> leave_one_out);

}  // namespace ising
