#include <cmath>
#include <set>

#include "doctest.h"
#include "ising/errors.hpp"
#include "ising/exact.hpp"
#include "ising/rng.hpp"
#include "ising/summation.hpp"

using namespace ising;

namespace {

// Backbone through the listed coordinates.
Backbone walk(const LatticeGraph& g, const EdgeOrder& order, const std::vector<Coord>& pts) {
  std::vector<OrientedEdge> steps;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) steps.push_back(orient(g, g.index(pts[i]), g.index(pts[i + 1])));
  return Backbone::from_steps(g, order, steps);
}

// Ratio of sourceless current sums, truncated at `cap`.
double truncated_ratio(const LatticeGraph& g, double beta, const std::vector<EdgeId>& even, int cap) {
  CompensatedSum num;
  CompensatedSum den;
  CurrentEnumerator it(g, cap, std::vector<Vertex>{});
  while (auto n = it.next()) {
    const double w = weight(g, *n, beta);
    den += w;
    bool ok = true;
    for (EdgeId e : even) ok = ok && n->values[e] % 2 == 0;
    if (ok) num += w;
  }
  return num.value() / den.value();
}

LatticeGraph random_small_graph(Rng& rng) {
  const int d = 1 + static_cast<int>(rng.below(2));
  std::vector<int> radii(d, 1);
  if (d == 1) radii[0] = 1 + static_cast<int>(rng.below(4));
  auto g = LatticeGraph::box(d, radii, Boundary::free);
  std::vector<EdgeId> cut;
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    if (rng.uniform() < 0.2) cut.push_back(e);
  return g.remove_edges(cut);
}

}  // namespace

TEST_CASE("exact correlation closed forms") {
  const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
  CHECK(exact_correlation(pair, 0.5, 0.0, {0, 1}) == doctest::Approx(0.46211715726000974).epsilon(1e-14));

  const auto path = LatticeGraph::box(Coord{0}, Coord{2}, Boundary::free);
  CHECK(exact_correlation(path, 0.5, 0.0, {0, 2}) ==
        doctest::Approx(std::tanh(0.5) * std::tanh(0.5)).epsilon(1e-14));
  CHECK(std::abs(exact_correlation(path, 0.0, 0.0, {0, 2})) < 1e-15);

  for (int k = 0; k < 8; ++k) {
    const auto p = LatticeGraph::box(Coord{0}, Coord{k}, Boundary::free);
    CHECK(exact_correlation(p, 0.8, 0.0, {0, static_cast<Vertex>(k)}) ==
          doctest::Approx(path_correlation(0.8, k)).epsilon(1e-13));
  }

  // single spin in a field
  const auto site = LatticeGraph::box(1, {0}, Boundary::free);
  CHECK(exact_correlation(site, 0.3, 0.7, {0}) == doctest::Approx(std::tanh(0.7)).epsilon(1e-14));
  CHECK(log_partition_function(site, 0.3, 0.7) == doctest::Approx(std::log(2.0 * std::cosh(0.7))));
}

TEST_CASE("correlation table invariants") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = random_small_graph(rng);
    const double beta = 1.5 * rng.uniform();
    std::vector<VertexSet> sets{{}};
    for (int k = 0; k < 6; ++k) {
      VertexSet a;
      for (Vertex v = 0; v < g.vertex_count(); ++v)
        if (rng.uniform() < 0.4) a.push_back(v);
      sets.push_back(a);
    }
    const auto c = correlations(g, beta, 0.0, sets);
    CHECK(c[0] == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t i = 0; i < sets.size(); ++i) {
      CHECK(std::abs(c[i]) <= 1.0 + 1e-12);
      if (sets[i].size() % 2 == 1) CHECK(std::abs(c[i]) < 1e-12);
    }
    const auto table = correlation_table(g, beta, 0.0, sets);
    CHECK(table.values.at(VertexSet{}) == doctest::Approx(1.0));
  }
}

TEST_CASE("transfer matrix agrees with enumeration") {
  Rng rng(8);
  struct Case {
    Coord lo, hi;
  };
  const std::vector<Case> cases{{{0, 0}, {3, 4}}, {{-1, -1}, {1, 1}}, {{0}, {9}}, {{0, 0, 0}, {2, 1, 1}}};
  for (const auto& [lo, hi] : cases) {
    auto g = LatticeGraph::box(lo, hi, Boundary::free);
    std::vector<EdgeId> cut;
    for (EdgeId e = 0; e < g.edge_count(); ++e)
      if (rng.uniform() < 0.15) cut.push_back(e);
    g = g.remove_edges(cut);
    for (double beta : {0.1, 0.44, 1.0}) {
      for (double field : {0.0, 0.3}) {
        std::vector<VertexSet> sets{{0, g.vertex_count() - 1}, {1}, {0, 1, 2, g.vertex_count() / 2}};
        const auto a = correlations(g, beta, field, sets, ExactMethod::enumeration);
        const auto b = correlations(g, beta, field, sets, ExactMethod::transfer_matrix);
        for (std::size_t i = 0; i < sets.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
        CHECK(log_partition_function(g, beta, field, ExactMethod::enumeration) ==
              doctest::Approx(log_partition_function(g, beta, field, ExactMethod::transfer_matrix))
                  .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("budget refusals") {
  const auto big = LatticeGraph::box(Coord{0, 0}, Coord{4, 4}, Boundary::free);
  CHECK_THROWS_AS(exact_correlation(big, 0.3, 0.0, {0, 1}), BudgetExceeded);
  CHECK_NOTHROW(correlations(big, 0.3, 0.0, std::vector<VertexSet>{{0, 1}}));
  const auto wide = LatticeGraph::box(Coord{0, 0}, Coord{1, 20}, Boundary::free);
  CHECK_THROWS_AS(log_partition_function(wide, 0.3, 0.0), BudgetExceeded);
  const auto torus = LatticeGraph::box(2, {2, 2}, Boundary::periodic);
  CHECK_THROWS_AS(log_partition_function(torus, 0.3, 0.0), BudgetExceeded);
  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{3, 3}, Boundary::free);
  CHECK_THROWS_AS(verify_switching(square, all_edges(square), {}, 0, 1, 3, 0.3), BudgetExceeded);
}

TEST_CASE("griffiths inequalities on random graphs") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = random_small_graph(rng);
    const double beta = 1.2 * rng.uniform();
    const double field = 0.5 * rng.uniform();
    VertexSet a;
    for (Vertex v = 0; v < g.vertex_count(); ++v)
      if (rng.uniform() < 0.35) a.push_back(v);
    const double c = exact_correlation(g, beta, field, a);
    CHECK(c >= -1e-12);

    // adding an edge back never lowers a correlation
    if (!g.removed_edges().empty()) {
      std::vector<EdgeId> keep = g.removed_edges();
      keep.erase(keep.begin() + static_cast<long>(rng.below(keep.size())));
      const auto fuller = LatticeGraph::box(g.lower(), g.upper(), Boundary::free).remove_edges(keep);
      CHECK(exact_correlation(fuller, beta, field, a) >= c - 1e-12);
    }
  }
}

TEST_CASE("parity constrained sum") {
  const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
  CHECK(parity_constrained_sum(pair, 0.5, std::vector<EdgeId>{}) == 1.0);
  CHECK(parity_constrained_sum(pair, 0.5, std::vector<EdgeId>{0}) == doctest::Approx(1.0).epsilon(1e-14));

  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
  for (const std::vector<EdgeId>& s : {std::vector<EdgeId>{0}, {0, 3}, {1, 2, 3}}) {
    const double closed = parity_constrained_sum(square, 0.4, s);
    CHECK(std::abs(closed - truncated_ratio(square, 0.4, s, 12)) < 1e-10);
    CHECK(closed <= 1.0 + 1e-14);
  }
}

TEST_CASE("truncated current ratio converges with the cap") {
  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
  const std::vector<EdgeId> s{0};
  const double closed = parity_constrained_sum(square, 0.5, s);
  double previous = 1.0;
  for (int cap = 2; cap <= 10; ++cap) {
    const double gap = std::abs(truncated_ratio(square, 0.5, s, cap) - closed);
    CHECK(gap <= previous);
    previous = gap;
    if (cap == 6) CHECK(gap < 1e-5);
  }
  CHECK(previous < 1e-8);
}

TEST_CASE("rho_exact") {
  const auto order = EdgeOrder::lexicographic();
  const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
  CHECK(rho_exact(pair, 0.5, walk(pair, order, {{0}, {1}})) == doctest::Approx(std::tanh(0.5)).epsilon(1e-14));
  CHECK(rho_exact(pair, 0.5, Backbone::trivial(0)) == 1.0);

  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
  const auto backbones = enumerate_backbones(square, order, 0, 3);
  REQUIRE(backbones.size() == 2);
  double total = 0.0;
  for (const auto& w : backbones) total += rho_exact(square, 0.4, w);
  CHECK(total == doctest::Approx(exact_correlation(square, 0.4, 0.0, {0, 3})).epsilon(1e-12));
}

TEST_CASE("switching identity") {
  SUBCASE("single edge, empty A") {
    const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
    const auto r = verify_switching(pair, all_edges(pair), {}, 0, 1, 4, 0.5);
    CHECK(r.max_deviation == 0.0);
    CHECK(r.nonzero_levels > 0);
  }

  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
  const Vertex x = square.index({0, 0});
  const Vertex y = square.index({1, 1});

  SUBCASE("square with a side path as subgraph") {
    const auto g1 = edge_mask(square, std::vector<EdgeId>{*square.edge_between(x, square.index({0, 1})),
                                                         *square.edge_between(square.index({0, 1}), y)});
    const auto r = verify_switching(square, g1, {x, y}, x, y, 3, 0.5);
    CHECK(r.max_deviation < 1e-12);
    CHECK(r.nonzero_levels > 0);
  }

  SUBCASE("summed sides reproduce the subgraph correlation") {
    const auto mask = edge_mask(square, std::vector<EdgeId>{0, 1, 2});
    const double beta = 0.3;
    const auto r = verify_switching(square, mask, {}, x, y, 12, beta);
    CHECK(r.max_deviation < 1e-12 * std::max(1.0, r.max_level_weight));
    // sum over sourceless currents is Z / 2^|V|
    const auto sub = square.remove_edges(std::vector<EdgeId>{3});
    const double z = std::exp(log_partition_function(square, beta, 0.0)) / 16.0;
    const double z1 = std::exp(log_partition_function(sub, beta, 0.0)) / 16.0;
    CHECK(r.lhs_total == doctest::Approx(z * z1 * exact_correlation(sub, beta, 0.0, {x, y})).epsilon(1e-10));
    CHECK(r.rhs_total == doctest::Approx(r.lhs_total).epsilon(1e-12));
  }

  SUBCASE("corrupted weights break it") {
    auto bad = [](int k, double b) { return std::pow(b, k) / std::tgamma(k + 1.0) * (1.0 + 0.1 * k); };
    const auto r = verify_switching(square, all_edges(square), {x, y}, x, y, 4, 0.5, bad);
    CHECK(r.max_deviation > 1e-6);
  }
}

TEST_CASE("backbone expansion") {
  const double beta = 0.4;
  for (const auto& order : {EdgeOrder::lexicographic(), EdgeOrder::reversed(), EdgeOrder::hashed(7)}) {
    const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
    CHECK(verify_backbone_expansion(pair, beta, 0, 1, order).deviation < 1e-12);
    const auto path = LatticeGraph::box(Coord{0}, Coord{2}, Boundary::free);
    CHECK(verify_backbone_expansion(path, beta, 0, 2, order).deviation < 1e-12);
    const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
    const auto r = verify_backbone_expansion(square, beta, 0, 3, order);
    CHECK(r.deviation < 1e-12);
    CHECK(r.backbones == 2);
    const auto box = LatticeGraph::box(2, {1, 1}, Boundary::free);
    CHECK(verify_backbone_expansion(box, 0.6, box.index({-1, -1}), box.index({1, 0}), order).deviation < 1e-12);
  }
}

TEST_CASE("concatenation property") {
  const auto order = EdgeOrder::lexicographic();
  const auto path = LatticeGraph::box(Coord{0}, Coord{2}, Boundary::free);
  const auto w1 = walk(path, order, {{0}, {1}});
  const auto w2 = walk(path, order, {{1}, {2}});
  CHECK(verify_concat(path, 0.5, w1, w2, order).deviation < 1e-12);
  CHECK(verify_concat(path, 0.5, w1, Backbone::trivial(1), order).deviation < 1e-15);

  const auto square = LatticeGraph::box(Coord{0, 0}, Coord{1, 1}, Boundary::free);
  const auto a = walk(square, order, {{0, 0}, {1, 0}});
  const auto b = walk(square, order, {{1, 0}, {1, 1}});
  const auto r = verify_concat(square, 0.4, a, b, order);
  CHECK(r.deviation < 1e-12);
  CHECK(r.lhs > 0.0);

  const auto box = LatticeGraph::box(2, {1, 1}, Boundary::free);
  for (const auto& o : {EdgeOrder::lexicographic(), EdgeOrder::reversed(), EdgeOrder::hashed(3)}) {
    const auto p = walk(box, o, {{-1, -1}, {0, -1}, {0, 0}});
    const auto q = walk(box, o, {{0, 0}, {0, 1}, {1, 1}});
    if (!is_consistent(box, o, [&] {
          auto s = p.steps();
          s.insert(s.end(), q.steps().begin(), q.steps().end());
          return s;
        }()))
      continue;
    CHECK(verify_concat(box, 0.5, p, q, o).deviation < 1e-12);
  }
}

TEST_CASE("reflection inequality") {
  const auto d = LatticeGraph::box(2, {2, 2}, Boundary::free);

  SUBCASE("y on the plane") {
    const auto r = verify_reflection(d, std::vector<EdgeId>{}, 0.4, d.index({0, 0}), d.index({0, 2}));
    CHECK(r.holds);
    CHECK(std::abs(r.margin) < 1e-12);
  }

  SUBCASE("symmetric domain without removed edges is an equality") {
    const auto r = verify_reflection(d, std::vector<EdgeId>{}, 0.4, d.index({0, 0}), d.index({1, 0}));
    CHECK(r.holds);
    CHECK(std::abs(r.margin) < 1e-12);
  }

  SUBCASE("removed edges on the mirror side") {
    const EdgeId cut = *d.edge_between(d.index({-2, 0}), d.index({-1, 0}));
    for (double beta : {0.2, 0.44, 0.8}) {
      const auto r = verify_reflection(d, std::vector<EdgeId>{cut}, beta, d.index({0, 1}), d.index({2, 0}));
      CHECK(r.holds);
      CHECK(r.margin > 0.0);
    }
  }

  SUBCASE("preconditions") {
    CHECK_THROWS_AS(verify_reflection(d, std::vector<EdgeId>{}, 0.4, d.index({1, 0}), d.index({2, 0})),
                    std::invalid_argument);
    const EdgeId right = *d.edge_between(d.index({1, 0}), d.index({2, 0}));
    CHECK_THROWS_AS(verify_reflection(d, std::vector<EdgeId>{right}, 0.4, d.index({0, 0}), d.index({2, 0})),
                    std::invalid_argument);
  }

  SUBCASE("random removed sets") {
    Rng rng(4);
    std::vector<EdgeId> left;
    for (EdgeId e = 0; e < d.edge_count(); ++e)
      if (d.coord(d.edge(e).v)[0] <= 0) left.push_back(e);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<EdgeId> a;
      for (EdgeId e : left)
        if (rng.uniform() < 0.3) a.push_back(e);
      const Vertex u = d.index({0, static_cast<int>(rng.below(5)) - 2});
      const Vertex y = d.index({static_cast<int>(rng.below(3)), static_cast<int>(rng.below(5)) - 2});
      CHECK(verify_reflection(d, a, 0.2 + rng.uniform(), u, y).holds);
    }
  }
}

TEST_CASE("finite-volume bound") {
  SUBCASE("infinite temperature") {
    const auto outer = LatticeGraph::box(1, {8}, Boundary::free);
    const auto r = verify_tfin(outer, {2}, 0.0, {0}, {1});
    CHECK(std::abs(r.lhs) < 1e-15);
    CHECK(std::abs(r.rhs) < 1e-15);
    CHECK(r.holds);
  }

  SUBCASE("d = 1 closed form") {
    const auto outer = LatticeGraph::box(1, {8}, Boundary::free);
    const double t = std::tanh(0.6);
    const auto r = verify_tfin(outer, {2}, 0.6, {0}, {1});
    CHECK(std::abs(r.lhs) < 1e-13);
    CHECK(r.rhs == doctest::Approx(std::pow(t, 3) + std::pow(t, 5)).epsilon(1e-12));
    CHECK(r.holds);
  }

  SUBCASE("d = 2 with the transfer matrix") {
    const auto outer = LatticeGraph::box(2, {5, 5}, Boundary::free);
    for (double beta : {0.3, 0.44, 0.6}) {
      const auto r = verify_tfin(outer, {2, 2}, beta, {0, 0}, {1, 0});
      CHECK(r.holds);
      CHECK(r.lhs >= -1e-12);
    }
  }

  SUBCASE("images must fit") {
    const auto outer = LatticeGraph::box(2, {4, 4}, Boundary::free);
    CHECK_THROWS_AS(verify_tfin(outer, {2, 2}, 0.4, {0, 0}, {1, 0}), std::invalid_argument);
  }
}
