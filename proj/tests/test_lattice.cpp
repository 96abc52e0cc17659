#include <algorithm>
#include <set>

#include "doctest.h"
#include "ising/exact.hpp"
#include "ising/lattice.hpp"
#include "ising/rng.hpp"

using namespace ising;

TEST_CASE("build_box counts") {
  const auto square = LatticeGraph::box(2, {1, 1}, Boundary::free);
  CHECK(square.vertex_count() == 9);
  CHECK(square.edge_count() == 12);

  const auto path = LatticeGraph::box(1, {2}, Boundary::free);
  CHECK(path.vertex_count() == 5);
  CHECK(path.edge_count() == 4);
  for (Vertex v = 0; v < 5; ++v) CHECK(path.coord(v) == Coord{static_cast<int>(v) - 2});
}

TEST_CASE("periodic 3^3 box against brute-force wrap-around pairs") {
  const auto g = LatticeGraph::box(3, {1, 1, 1}, Boundary::periodic);
  CHECK(g.vertex_count() == 27);

  // Oracle: two sites are adjacent iff they differ on exactly one axis by
  // +-1 modulo the side length.
  std::size_t pairs = 0;
  for (Vertex a = 0; a < 27; ++a) {
    for (Vertex b = a + 1; b < 27; ++b) {
      const Coord x = g.coord(a);
      const Coord y = g.coord(b);
      int differing = 0;
      bool unit = true;
      for (int i = 0; i < 3; ++i) {
        if (x[i] == y[i]) continue;
        ++differing;
        const int delta = ((y[i] - x[i]) % 3 + 3) % 3;
        unit = unit && (delta == 1 || delta == 2);
      }
      if (differing == 1 && unit) {
        ++pairs;
        CHECK(g.edge_between(a, b).has_value());
      }
    }
  }
  CHECK(pairs == 81);
  CHECK(g.edge_count() == 81);
  for (Vertex v = 0; v < g.vertex_count(); ++v) CHECK(g.degree(v) == 6);
}

TEST_CASE("build_box rejects invalid input") {
  CHECK_THROWS_AS(LatticeGraph::box(0, {}, Boundary::free), std::invalid_argument);
  CHECK_THROWS_AS(LatticeGraph::box(2, {1}, Boundary::free), std::invalid_argument);
  CHECK_THROWS_AS(LatticeGraph::box(2, {1, -1}, Boundary::free), std::invalid_argument);
  CHECK_THROWS_AS(LatticeGraph::box(2, {1, 0}, Boundary::periodic), std::invalid_argument);
}

TEST_CASE("free box edge count formula on random boxes") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(4));
    std::vector<int> radii(d);
    for (int& r : radii) r = static_cast<int>(rng.below(4));
    const auto g = LatticeGraph::box(d, radii, Boundary::free);
    std::size_t vertices = 1;
    for (int r : radii) vertices *= 2 * r + 1;
    CHECK(g.vertex_count() == vertices);
    CHECK(g.edge_count() == free_box_edge_count(radii));
  }
}

TEST_CASE("periodic boxes are 2d-regular") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(3));
    std::vector<int> radii(d);
    for (int& r : radii) r = 1 + static_cast<int>(rng.below(2));
    const auto g = LatticeGraph::box(d, radii, Boundary::periodic);
    for (Vertex v = 0; v < g.vertex_count(); ++v) CHECK(g.degree(v) == static_cast<std::size_t>(2 * d));
  }
}

TEST_CASE("remove_edges") {
  const auto g = LatticeGraph::box(2, {1, 1}, Boundary::free);

  SUBCASE("empty set leaves the graph unchanged") {
    CHECK(g.remove_edges(std::vector<EdgeId>{}) == g);
  }

  SUBCASE("single edge graph decouples") {
    const auto edge = LatticeGraph::box(1, {0}, Boundary::free);
    const auto pair = LatticeGraph::box(Coord{0}, Coord{1}, Boundary::free);
    CHECK(edge.edge_count() == 0);
    REQUIRE(pair.edge_count() == 1);
    const auto cut = pair.remove_edges(std::vector<EdgeId>{0});
    CHECK(cut.vertex_count() == 2);
    CHECK(cut.coupling(0) == 0.0);
    CHECK(exact_correlation(cut, 0.7, 0.0, {0, 1}) == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("removing an interior edge lowers correlations") {
    const Vertex x = g.index({-1, -1});
    const Vertex y = g.index({1, 1});
    const auto cut = g.remove_edges({{Coord{0, 0}, Coord{1, 0}}});
    CHECK(cut.vertex_count() == g.vertex_count());
    CHECK(cut.removed_edges().size() == 1);
    CHECK(exact_correlation(cut, 0.4, 0.0, {x, y}) < exact_correlation(g, 0.4, 0.0, {x, y}));
  }

  SUBCASE("non-edges are rejected") {
    CHECK_THROWS_AS(g.remove_edges(std::vector<EdgeId>{12}), std::invalid_argument);
    CHECK_THROWS_AS(g.remove_edges({{Coord{-1, -1}, Coord{1, 1}}}), std::invalid_argument);
  }

  SUBCASE("idempotent on random sets") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EdgeId> a;
      for (EdgeId e = 0; e < g.edge_count(); ++e)
        if (rng.uniform() < 0.3) a.push_back(e);
      const auto once = g.remove_edges(a);
      CHECK(once.remove_edges(a) == once);
      for (EdgeId e = 0; e < g.edge_count(); ++e)
        CHECK(once.coupling(e) == (std::find(a.begin(), a.end(), e) != a.end() ? 0.0 : 1.0));
    }
  }
}

TEST_CASE("reflect") {
  CHECK(Reflection{0, 0}.apply(Coord{3, 1}) == Coord{-3, 1});
  const auto edge = Reflection{0, 0}.apply(std::pair<Coord, Coord>{{0, 0}, {1, 0}});
  CHECK(edge.first == Coord{0, 0});
  CHECK(edge.second == Coord{-1, 0});

  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Coord> points(5, Coord(3));
    for (auto& p : points)
      for (int& c : p) c = static_cast<int>(rng.below(21)) - 10;
    const Reflection r{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(7)) - 3};
    CHECK(r.apply(r.apply(points)) == points);
  }
}

TEST_CASE("boundary_and_faces") {
  SUBCASE("1-d path") {
    const auto g = LatticeGraph::box(1, {4}, Boundary::free);
    const auto b = boundary_and_faces(g, {2});
    REQUIRE(b.boundary.size() == 2);
    CHECK(g.coord(b.boundary[0]) == Coord{-2});
    CHECK(g.coord(b.boundary[1]) == Coord{2});
    CHECK(b.faces.size() == 2);
  }

  SUBCASE("d=2, n=1: every non-centre site") {
    const auto g = LatticeGraph::box(2, {2, 2}, Boundary::free);
    const auto b = boundary_and_faces(g, {1, 1});
    CHECK(b.boundary.size() == 8);
    CHECK(std::find(b.boundary.begin(), b.boundary.end(), g.index({0, 0})) == b.boundary.end());
    CHECK(b.faces.size() == 4);
  }

  SUBCASE("reflected images") {
    const auto images = reflected_images({0, 0}, {1, 1});
    const std::set<Coord> got(images.begin(), images.end());
    const std::set<Coord> want{{2, 0}, {-2, 0}, {0, 2}, {0, -2}};
    CHECK(got == want);
  }

  SUBCASE("inner box must be contained") {
    const auto g = LatticeGraph::box(2, {1, 1}, Boundary::free);
    CHECK_THROWS_AS(boundary_and_faces(g, {2, 1}), std::invalid_argument);
  }

  SUBCASE("faces are mirror planes of the box") {
    const auto g = LatticeGraph::box(3, {3, 3, 3}, Boundary::free);
    const std::vector<int> inner{2, 1, 2};
    const auto b = boundary_and_faces(g, inner);
    CHECK(b.faces.size() == 6);
    std::set<Vertex> covered;
    for (const Face& f : b.faces) {
      for (Vertex v : f.vertices) {
        CHECK(f.plane.apply(g.coord(v)) == g.coord(v));
        covered.insert(v);
      }
      // Every other site of the inner box is mapped outside it.
      const auto inner_box = LatticeGraph::box(3, inner, Boundary::free);
      for (Vertex v = 0; v < inner_box.vertex_count(); ++v) {
        const Coord x = inner_box.coord(v);
        if (x[f.axis] == f.sign * inner[f.axis]) continue;
        CHECK_FALSE(inner_box.contains(f.plane.apply(x)));
      }
    }
    CHECK(covered == std::set<Vertex>(b.boundary.begin(), b.boundary.end()));
  }
}

TEST_CASE("graph json round trip") {
  const auto g = LatticeGraph::box(Coord{0, -1}, Coord{3, 1}, Boundary::free)
                     .remove_edges(std::vector<EdgeId>{1, 4});
  const auto back = LatticeGraph::from_json(g.to_json());
  CHECK(back == g);
  CHECK(back.to_json() == g.to_json());
  const auto sym = LatticeGraph::box(2, {2, 1}, Boundary::periodic);
  CHECK(sym.to_json()["radii"] == nlohmann::json({2, 1}));
  CHECK(LatticeGraph::from_json(sym.to_json()) == sym);
}
