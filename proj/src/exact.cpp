#include "ising/exact.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>

#include "ising/errors.hpp"
#include "ising/summation.hpp"

namespace ising {

namespace {

struct RawSums {
  double log_scale = 0.0;
  double z = 0.0;
  std::vector<double> set_sums;  // unnormalised sum of sigma_A * weight
};

bool integer_couplings(const LatticeGraph& g) {
  for (const Edge& e : g.edges())
    if (e.coupling != std::floor(e.coupling) || e.coupling > 1e6) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Full enumeration in Gray-code order. Bit v of the state set means
// sigma_v = -1.

RawSums enumerate_spins(const LatticeGraph& g, double beta, double field,
                        std::span<const VertexSet> sets) {
  const std::size_t n = g.vertex_count();
  if (n > kEnumerationBudget)
    throw BudgetExceeded("spin enumeration refused: " + std::to_string(n) + " vertices exceed the budget of " +
                         std::to_string(kEnumerationBudget));

  std::vector<std::uint32_t> masks;
  masks.reserve(sets.size());
  for (const VertexSet& a : sets) {
    std::uint32_t m = 0;
    for (Vertex v : a) {
      if (v >= n) throw std::invalid_argument("correlation set contains a vertex outside the graph");
      m ^= 1u << v;  // repeated vertices cancel, as sigma^2 = 1
    }
    masks.push_back(m);
  }

  double total_coupling = 0.0;
  for (const Edge& e : g.edges()) total_coupling += std::abs(e.coupling);
  const double shift = beta * total_coupling + std::abs(field) * static_cast<double>(n);

  const bool use_table = integer_couplings(g);
  const long s_max = static_cast<long>(total_coupling);
  const long m_max = static_cast<long>(n);
  std::vector<double> table;
  if (use_table) {
    table.resize(static_cast<std::size_t>((2 * s_max + 1) * (2 * m_max + 1)));
    for (long s = -s_max; s <= s_max; ++s)
      for (long m = -m_max; m <= m_max; ++m)
        table[static_cast<std::size_t>((s + s_max) * (2 * m_max + 1) + (m + m_max))] =
            std::exp(beta * static_cast<double>(s) + field * static_cast<double>(m) - shift);
  }

  const unsigned high_bits = n > 14 ? static_cast<unsigned>(n - 14) : 0u;
  const unsigned low_bits = static_cast<unsigned>(n) - high_bits;
  const std::size_t chunks = std::size_t{1} << high_bits;
  const std::size_t width = 1 + masks.size();
  std::vector<CompensatedSum> partial(chunks * width);

  auto run_chunk = [&](std::size_t chunk) {
    std::vector<int> spin(n, 1);
    std::uint32_t state = static_cast<std::uint32_t>(chunk) << low_bits;
    for (std::size_t v = 0; v < n; ++v)
      if (state >> v & 1u) spin[v] = -1;
    double bonds = 0.0;
    for (const Edge& e : g.edges()) bonds += e.coupling * spin[e.u] * spin[e.v];
    double magnet = 0.0;
    for (int s : spin) magnet += s;

    CompensatedSum* out = &partial[chunk * width];
    const std::uint64_t count = std::uint64_t{1} << low_bits;
    for (std::uint64_t i = 0; i < count; ++i) {
      if (i > 0) {
        const unsigned j = static_cast<unsigned>(std::countr_zero(i));
        double local = 0.0;
        for (const Incidence& inc : g.incident(j)) local += g.coupling(inc.edge) * spin[inc.neighbor];
        bonds -= 2.0 * spin[j] * local;
        magnet -= 2.0 * spin[j];
        spin[j] = -spin[j];
        state ^= 1u << j;
      }
      const double w =
          use_table ? table[static_cast<std::size_t>((std::lround(bonds) + s_max) * (2 * m_max + 1) +
                                                     (std::lround(magnet) + m_max))]
                    : std::exp(beta * bonds + field * magnet - shift);
      out[0].add(w);
      for (std::size_t k = 0; k < masks.size(); ++k)
        out[1 + k].add((std::popcount(state & masks[k]) & 1) ? -w : w);
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < chunks; c = next++) run_chunk(c);
      });
    }
  }

  // Merge in chunk order so the result does not depend on scheduling.
  std::vector<CompensatedSum> merged(width);
  for (std::size_t c = 0; c < chunks; ++c)
    for (std::size_t k = 0; k < width; ++k) merged[k] += partial[c * width + k];

  RawSums out;
  out.log_scale = shift;
  out.z = merged[0].value();
  for (std::size_t k = 1; k < width; ++k) out.set_sums.push_back(merged[k].value());
  return out;
}

// ---------------------------------------------------------------------------
// Transfer matrix along axis 0. Vertex v = slice * W + local by row-major
// numbering, so each slice is a contiguous block.

class TransferMatrix {
 public:
  TransferMatrix(const LatticeGraph& g, double beta, double field) : g_(g), beta_(beta) {
    if (g.boundary() == Boundary::periodic)
      throw BudgetExceeded("transfer matrix refused: periodic boundary along the slicing axis");
    slices_ = static_cast<std::size_t>(g.side(0));
    width_ = g.vertex_count() / slices_;
    if (width_ > kTransferSliceBudget)
      throw BudgetExceeded("transfer matrix refused: slice of " + std::to_string(width_) +
                           " sites exceeds the budget of " + std::to_string(kTransferSliceBudget));
    states_ = std::size_t{1} << width_;

    diag_.assign(slices_, std::vector<double>(states_, 0.0));
    diag_log_.assign(slices_, 0.0);
    inter_.assign(slices_, std::vector<double>(width_, 0.0));
    for (const Edge& e : g.edges()) {
      const std::size_t su = e.u / width_;
      const std::size_t sv = e.v / width_;
      if (su == sv) continue;
      if (e.axis != 0 || sv != su + 1 || e.v % width_ != e.u % width_)
        throw std::logic_error("transfer matrix: unexpected edge between slices");
      inter_[sv][e.v % width_] = e.coupling;
    }

    for (std::size_t s = 0; s < slices_; ++s) {
      std::vector<std::pair<std::size_t, std::pair<std::size_t, double>>> intra;
      double bound = std::abs(field) * static_cast<double>(width_);
      for (const Edge& e : g.edges()) {
        if (e.u / width_ == s && e.v / width_ == s) {
          intra.push_back({e.u % width_, {e.v % width_, e.coupling}});
          bound += beta * std::abs(e.coupling);
        }
      }
      diag_log_[s] = bound;
      for (std::size_t st = 0; st < states_; ++st) {
        double energy = 0.0;
        for (const auto& [a, rest] : intra) {
          const int sa = (st >> a & 1u) ? -1 : 1;
          const int sb = (st >> rest.first & 1u) ? -1 : 1;
          energy += beta * rest.second * sa * sb;
        }
        const int down = std::popcount(static_cast<std::uint64_t>(st));
        energy += field * static_cast<double>(static_cast<int>(width_) - 2 * down);
        diag_[s][st] = std::exp(energy - bound);
      }
    }
  }

  // Returns (sum, log_scale) such that sum_sigma sigma_A e^{-H} = sum * e^{log_scale}.
  std::pair<double, double> run(const std::vector<std::uint64_t>& slice_masks) const {
    std::vector<double> v(states_);
    double log_scale = 0.0;
    for (std::size_t s = 0; s < slices_; ++s) {
      if (s == 0) {
        std::fill(v.begin(), v.end(), 1.0);
      } else {
        for (std::size_t j = 0; j < width_; ++j) {
          const double coupling = inter_[s][j];
          const double t = std::exp(-2.0 * beta_ * coupling);
          log_scale += beta_ * coupling;
          const std::size_t bit = std::size_t{1} << j;
          for (std::size_t st = 0; st < states_; ++st) {
            if (st & bit) continue;
            const double a = v[st];
            const double b = v[st | bit];
            v[st] = a + t * b;
            v[st | bit] = t * a + b;
          }
        }
      }
      const auto& dg = diag_[s];
      const std::uint64_t mask = slice_masks[s];
      double peak = 0.0;
      for (std::size_t st = 0; st < states_; ++st) {
        double w = v[st] * dg[st];
        if (std::popcount(static_cast<std::uint64_t>(st) & mask) & 1) w = -w;
        v[st] = w;
        peak = std::max(peak, std::abs(w));
      }
      log_scale += diag_log_[s];
      if (peak > 0.0) {
        for (double& w : v) w /= peak;
        log_scale += std::log(peak);
      }
    }
    CompensatedSum total;
    for (double w : v) total += w;
    return {total.value(), log_scale};
  }

  std::vector<std::uint64_t> masks_for(const VertexSet& a) const {
    std::vector<std::uint64_t> masks(slices_, 0);
    for (Vertex v : a) {
      if (v >= g_.vertex_count()) throw std::invalid_argument("correlation set contains a vertex outside the graph");
      masks[v / width_] ^= std::uint64_t{1} << (v % width_);
    }
    return masks;
  }

 private:
  const LatticeGraph& g_;
  double beta_;
  std::size_t slices_ = 0;
  std::size_t width_ = 0;
  std::size_t states_ = 0;
  std::vector<std::vector<double>> diag_;
  std::vector<double> diag_log_;
  std::vector<std::vector<double>> inter_;
};

ExactMethod resolve(const LatticeGraph& g, ExactMethod method) {
  if (method != ExactMethod::automatic) return method;
  return g.vertex_count() <= kEnumerationBudget ? ExactMethod::enumeration : ExactMethod::transfer_matrix;
}

void check_parameters(double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
}

}  // namespace

double log_partition_function(const LatticeGraph& g, double beta, double field, ExactMethod method) {
  check_parameters(beta);
  if (resolve(g, method) == ExactMethod::enumeration) {
    const RawSums r = enumerate_spins(g, beta, field, {});
    return r.log_scale + std::log(r.z);
  }
  TransferMatrix tm(g, beta, field);
  const auto [sum, scale] = tm.run(tm.masks_for({}));
  return scale + std::log(sum);
}

std::vector<double> correlations(const LatticeGraph& g, double beta, double field,
                                 std::span<const VertexSet> sets, ExactMethod method) {
  check_parameters(beta);
  std::vector<double> out;
  out.reserve(sets.size());
  if (resolve(g, method) == ExactMethod::enumeration) {
    const RawSums r = enumerate_spins(g, beta, field, sets);
    for (double s : r.set_sums) out.push_back(s / r.z);
    return out;
  }
  TransferMatrix tm(g, beta, field);
  const auto [z, z_scale] = tm.run(tm.masks_for({}));
  for (const VertexSet& a : sets) {
    const auto [s, s_scale] = tm.run(tm.masks_for(a));
    out.push_back(s / z * std::exp(s_scale - z_scale));
  }
  return out;
}

double exact_correlation(const LatticeGraph& g, double beta, double field, const VertexSet& a) {
  const VertexSet sets[] = {a};
  return correlations(g, beta, field, sets, ExactMethod::enumeration).front();
}

std::vector<double> pair_correlation_matrix(const LatticeGraph& g, double beta, double field,
                                            ExactMethod method) {
  const std::size_t n = g.vertex_count();
  std::vector<VertexSet> sets;
  for (Vertex x = 0; x < n; ++x)
    for (Vertex y = x + 1; y < n; ++y) sets.push_back({x, y});
  const std::vector<double> values = correlations(g, beta, field, sets, method);
  std::vector<double> m(n * n, 1.0);
  std::size_t k = 0;
  for (Vertex x = 0; x < n; ++x) {
    for (Vertex y = x + 1; y < n; ++y, ++k) {
      m[x * n + y] = values[k];
      m[y * n + x] = values[k];
    }
  }
  return m;
}

CorrelationTable correlation_table(const LatticeGraph& g, double beta, double field,
                                   const std::vector<VertexSet>& sets, ExactMethod method) {
  CorrelationTable table;
  table.graph_fingerprint = g.fingerprint();
  table.beta = beta;
  table.field = field;
  const std::vector<double> values = correlations(g, beta, field, sets, method);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    VertexSet key = sets[i];
    std::sort(key.begin(), key.end());
    table.values[key] = values[i];
  }
  return table;
}

double exact_susceptibility(const LatticeGraph& g, double beta, ExactMethod method) {
  const std::vector<double> m = pair_correlation_matrix(g, beta, 0.0, method);
  CompensatedSum total;
  for (double v : m) total += v;
  return total.value() / static_cast<double>(g.vertex_count());
}

double path_correlation(double beta, int distance) {
  return std::pow(std::tanh(beta), std::abs(distance));
}

double parity_constrained_sum(const LatticeGraph& g, double beta, std::span<const EdgeId> even_edges,
                              ExactMethod method) {
  check_parameters(beta);
  if (even_edges.empty()) return 1.0;
  std::vector<EdgeId> unique(even_edges.begin(), even_edges.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  double log_cosh = 0.0;
  for (EdgeId e : unique) {
    if (e >= g.edge_count()) throw std::invalid_argument("parity_constrained_sum: not an edge of the graph");
    log_cosh += std::log(std::cosh(beta * g.coupling(e)));
  }
  const LatticeGraph reduced = g.remove_edges(unique);
  return std::exp(log_cosh + log_partition_function(reduced, beta, 0.0, method) -
                  log_partition_function(g, beta, 0.0, method));
}

double rho_exact(const LatticeGraph& g, double beta, const Backbone& w, ExactMethod method) {
  if (w.empty()) return 1.0;
  double product = 1.0;
  for (const OrientedEdge& s : w.steps()) {
    if (s.edge >= g.edge_count() || orient(g, s.from, s.to) != s)
      throw std::invalid_argument("rho_exact: backbone does not belong to this graph");
    product *= std::tanh(beta * g.coupling(s.edge));
  }
  if (product == 0.0) return 0.0;
  return product * parity_constrained_sum(g, beta, w.cancelled(), method);
}

SwitchingReport verify_switching(const LatticeGraph& g, const EdgeMask& g1_edges, const VertexSet& a,
                                 Vertex x, Vertex y, int cap, double beta,
                                 const EdgeWeightFn& edge_weight) {
  check_parameters(beta);
  const std::size_t ne = g.edge_count();
  if (g1_edges.size() != ne) throw std::invalid_argument("verify_switching: subgraph mask has wrong size");
  if (cap < 0) throw std::invalid_argument("verify_switching: negative cap");
  if (g.vertex_count() > 64 || ne > 16 || std::pow(cap + 1.0, static_cast<double>(ne)) > 2e7)
    throw BudgetExceeded("verify_switching refused: instance too large for exhaustive enumeration");
  if (x >= g.vertex_count() || y >= g.vertex_count())
    throw std::invalid_argument("verify_switching: x, y must be vertices of the graph");

  std::vector<std::uint64_t> emask(ne);
  for (EdgeId e = 0; e < ne; ++e) emask[e] = (1ULL << g.edge(e).u) ^ (1ULL << g.edge(e).v);
  std::uint64_t a_mask = 0;
  for (Vertex v : a) a_mask ^= 1ULL << v;
  const std::uint64_t xy_mask = (1ULL << x) ^ (1ULL << y);
  const std::uint64_t combined_target = a_mask ^ xy_mask;

  std::vector<std::vector<double>> f(ne, std::vector<double>(cap + 1));
  for (EdgeId e = 0; e < ne; ++e)
    for (int k = 0; k <= cap; ++k) f[e][k] = edge_weight(k, beta * g.coupling(e));

  std::vector<EdgeId> sub;
  for (EdgeId e = 0; e < ne; ++e)
    if (g1_edges[e]) sub.push_back(e);

  SwitchingReport report;
  CompensatedSum lhs_all;
  CompensatedSum rhs_all;
  std::vector<int> big(ne, 0);
  std::uint64_t big_parity = 0;
  CurrentConfiguration total{std::vector<int>(ne, 0)};
  std::vector<int> m(sub.size());

  while (true) {
    ++report.levels;
    if (big_parity == combined_target) {
      total.values = big;
      const bool joined = connected(g, total, x, y, g1_edges);
      CompensatedSum lhs;
      CompensatedSum rhs;
      std::fill(m.begin(), m.end(), 0);
      std::uint64_t m_parity = 0;
      while (true) {
        const bool lhs_term = m_parity == xy_mask;
        const bool rhs_term = m_parity == 0 && joined;
        if (lhs_term || rhs_term) {
          double w = 1.0;
          std::size_t k = 0;
          for (EdgeId e = 0; e < ne; ++e) {
            const int me = (k < sub.size() && sub[k] == e) ? m[k++] : 0;
            w *= f[e][big[e] - me] * f[e][me];
          }
          if (lhs_term) lhs += w;
          if (rhs_term) rhs += w;
        }
        std::size_t i = 0;
        for (; i < sub.size(); ++i) {
          if (m[i] < big[sub[i]]) {
            ++m[i];
            m_parity ^= emask[sub[i]];
            break;
          }
          if (m[i] & 1) m_parity ^= emask[sub[i]];
          m[i] = 0;
        }
        if (i == sub.size()) break;
      }
      const double l = lhs.value();
      const double r = rhs.value();
      if (l != 0.0 || r != 0.0) ++report.nonzero_levels;
      lhs_all += l;
      rhs_all += r;
      report.max_level_weight = std::max(report.max_level_weight, std::abs(l));
      report.max_deviation = std::max(report.max_deviation, std::abs(l - r));
    }
    std::size_t e = 0;
    for (; e < ne; ++e) {
      if (big[e] < cap) {
        ++big[e];
        big_parity ^= emask[e];
        break;
      }
      if (big[e] & 1) big_parity ^= emask[e];
      big[e] = 0;
    }
    if (e == ne) break;
  }
  report.lhs_total = lhs_all.value();
  report.rhs_total = rhs_all.value();
  return report;
}

ExpansionReport verify_backbone_expansion(const LatticeGraph& g, double beta, Vertex x, Vertex y,
                                          const EdgeOrder& order) {
  ExpansionReport report;
  const VertexSet sets[] = {{x, y}};
  report.correlation = correlations(g, beta, 0.0, sets).front();
  const std::vector<Backbone> backbones = enumerate_backbones(g, order, x, y);
  report.backbones = backbones.size();

  std::map<std::vector<EdgeId>, double> parity_cache;
  CompensatedSum total;
  for (const Backbone& w : backbones) {
    if (w.empty()) {
      total += 1.0;
      continue;
    }
    double product = 1.0;
    for (const OrientedEdge& s : w.steps()) product *= std::tanh(beta * g.coupling(s.edge));
    auto it = parity_cache.find(w.cancelled());
    if (it == parity_cache.end())
      it = parity_cache.emplace(w.cancelled(), parity_constrained_sum(g, beta, w.cancelled())).first;
    total += product * it->second;
  }
  report.backbone_sum = total.value();
  report.deviation = std::abs(report.correlation - report.backbone_sum);
  return report;
}

ConcatReport verify_concat(const LatticeGraph& g, double beta, const Backbone& w1, const Backbone& w2,
                           const EdgeOrder& order) {
  const Backbone joined = concatenate(g, order, w1, w2);
  ConcatReport report;
  report.lhs = rho_exact(g, beta, joined);
  const LatticeGraph reduced = g.remove_edges(w1.cancelled());
  report.rhs = rho_exact(g, beta, w1) * rho_exact(reduced, beta, w2);
  report.deviation = std::abs(report.lhs - report.rhs);
  return report;
}

InequalityReport verify_reflection(const LatticeGraph& d, std::span<const EdgeId> reflected_edges,
                                   double beta, Vertex u, Vertex y) {
  if (d.lower()[0] != -d.upper()[0])
    throw std::invalid_argument("verify_reflection: domain must be symmetric about x_1 = 0");
  if (d.boundary() != Boundary::free) throw std::invalid_argument("verify_reflection: free boundary required");
  for (EdgeId e : reflected_edges) {
    if (e >= d.edge_count()) throw std::invalid_argument("verify_reflection: not an edge of the domain");
    if (d.coord(d.edge(e).u)[0] > 0 || d.coord(d.edge(e).v)[0] > 0)
      throw std::invalid_argument("verify_reflection: removed edges must lie in x_1 <= 0");
  }
  const Coord cu = d.coord(u);
  const Coord cy = d.coord(y);
  if (cu[0] != 0) throw std::invalid_argument("verify_reflection: u must lie on the plane x_1 = 0");
  if (cy[0] < 0) throw std::invalid_argument("verify_reflection: y must satisfy y_1 >= 0");

  const LatticeGraph reduced = d.remove_edges(reflected_edges);
  const Vertex ybar = d.index(Reflection{0, 0}.apply(cy));
  const VertexSet sets[] = {{u, y}, {u, ybar}};
  const std::vector<double> c = correlations(reduced, beta, 0.0, sets);

  InequalityReport report;
  report.lhs = c[0];
  report.rhs = c[1];
  report.margin = c[0] - c[1];
  report.holds = report.margin >= -kInequalityTolerance;
  return report;
}

InequalityReport verify_tfin(const LatticeGraph& outer, const std::vector<int>& inner_radii, double beta,
                             const Coord& x, const Coord& y) {
  if (outer.boundary() != Boundary::free) throw std::invalid_argument("verify_tfin: free boundary required");
  boundary_and_faces(outer, inner_radii);  // validates containment
  const LatticeGraph inner = LatticeGraph::box(outer.dimension(), inner_radii, Boundary::free);
  if (!inner.contains(x) || !inner.contains(y))
    throw std::invalid_argument("verify_tfin: x and y must lie in the inner box");

  VertexSet outer_pair{outer.index(x), outer.index(y)};
  std::vector<VertexSet> sets{outer_pair};
  for (const Coord& image : reflected_images(y, inner_radii)) {
    auto v = outer.find(image);
    if (!v) throw std::invalid_argument("verify_tfin: reflected image of y lies outside the outer box");
    sets.push_back({outer.index(x), *v});
  }
  const std::vector<double> c = correlations(outer, beta, 0.0, sets);
  const VertexSet inner_sets[] = {{inner.index(x), inner.index(y)}};
  const double inner_corr = correlations(inner, beta, 0.0, inner_sets).front();

  InequalityReport report;
  report.lhs = c[0] - inner_corr;
  CompensatedSum images;
  for (std::size_t i = 1; i < c.size(); ++i) images += c[i];
  report.rhs = images.value();
  report.margin = report.rhs - report.lhs;
  report.holds = report.margin >= -kInequalityTolerance;
  return report;
}

}  // namespace ising
