#pragma once

// Independent draws from the Ising measure on a small graph, by inverting
// the cumulative distribution over all 2^|V| states.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ising/lattice.hpp"
#include "ising/rng.hpp"
#include "ising/spin_mc.hpp"

class ExactSampler {
 public:
  ExactSampler(const ising::LatticeGraph& g, double beta, double field) : n_(g.vertex_count()) {
    if (n_ > 20) throw std::invalid_argument("ExactSampler: graph too large");
    const std::size_t states = std::size_t{1} << n_;
    cdf_.resize(states);
    std::vector<double> logw(states);
    double peak = -1e300;
    for (std::size_t st = 0; st < states; ++st) {
      double e = 0.0;
      for (const ising::Edge& ed : g.edges()) e += ed.coupling * spin(st, ed.u) * spin(st, ed.v);
      double m = 0.0;
      for (std::size_t v = 0; v < n_; ++v) m += spin(st, v);
      logw[st] = beta * e + field * m;
      peak = std::max(peak, logw[st]);
    }
    double total = 0.0;
    for (std::size_t st = 0; st < states; ++st) {
      total += std::exp(logw[st] - peak);
      cdf_[st] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  ising::SpinConfiguration draw(ising::Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const std::size_t st = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    ising::SpinConfiguration c;
    c.spins.resize(n_);
    for (std::size_t v = 0; v < n_; ++v) c.spins[v] = static_cast<std::int8_t>(spin(st, v));
    return c;
  }

 private:
  static int spin(std::size_t st, std::size_t v) { return (st >> v & 1u) ? -1 : 1; }

  std::size_t n_;
  std::vector<double> cdf_;
};
