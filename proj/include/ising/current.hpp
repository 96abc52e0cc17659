#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ising/lattice.hpp"

namespace ising {

/// Nonnegative integer label per edge, indexed by EdgeId.
struct CurrentConfiguration {
  std::vector<int> values;

  static CurrentConfiguration zero(const LatticeGraph& g) {
    return CurrentConfiguration{std::vector<int>(g.edge_count(), 0)};
  }
  friend bool operator==(const CurrentConfiguration&, const CurrentConfiguration&) = default;
};

using EdgeMask = std::vector<bool>;

EdgeMask all_edges(const LatticeGraph& g);
EdgeMask edge_mask(const LatticeGraph& g, std::span<const EdgeId> edges);

/// Vertices with odd total incident current, ascending.
std::vector<Vertex> sources(const LatticeGraph& g, const CurrentConfiguration& n);

/// Per-edge weight term (beta*J)^k / k!.
using EdgeWeightFn = std::function<double(int k, double beta_coupling)>;
double standard_edge_weight(int k, double beta_coupling);

/// prod_e (beta J_e)^{n_e} / n_e!.
double weight(const LatticeGraph& g, const CurrentConfiguration& n, double beta);

/// Whether x and y are joined by a path of edges in `sub` that carry
/// strictly positive current.
bool connected(const LatticeGraph& g, const CurrentConfiguration& n, Vertex x, Vertex y,
               const EdgeMask& sub);

struct OrientedEdge {
  Vertex from = 0;
  Vertex to = 0;
  EdgeId edge = 0;
  int direction = 0;

  friend bool operator==(const OrientedEdge&, const OrientedEdge&) = default;
};

/// Oriented edge from `from` to its neighbour `to`; throws if not adjacent.
OrientedEdge orient(const LatticeGraph& g, Vertex from, Vertex to);

/// Total order on the oriented edges of Z^d.
///
/// The default is lexicographic in (source coordinates, direction) with
/// directions ordered +e_1 < -e_1 < +e_2 < ... . The other kinds exist so
/// that order-independent identities can be checked under several orders;
/// all of them are defined from coordinates, so the same oriented edge of
/// Z^d gets the same relative position in every box that contains it.
class EdgeOrder {
 public:
  enum class Kind { lexicographic, reversed, hashed };

  static EdgeOrder lexicographic() { return EdgeOrder(Kind::lexicographic, 0); }
  static EdgeOrder reversed() { return EdgeOrder(Kind::reversed, 0); }
  static EdgeOrder hashed(std::uint64_t seed) { return EdgeOrder(Kind::hashed, seed); }

  Kind kind() const { return kind_; }
  std::string name() const;

  bool precedes(const LatticeGraph& g, const OrientedEdge& a, const OrientedEdge& b) const;

 private:
  EdgeOrder(Kind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}
  std::uint64_t key(const LatticeGraph& g, Vertex v, int direction) const;

  Kind kind_;
  std::uint64_t seed_;
};

/// Unoriented edges cancelled by a sequence of oriented edges: each step
/// (x, y) cancels {x, y} and every {x, z} with (x, z) earlier than (x, y).
/// Sorted ascending.
std::vector<EdgeId> cancelled_edges(const LatticeGraph& g, const EdgeOrder& order,
                                    std::span<const OrientedEdge> prefix);

/// No step uses an edge cancelled by an earlier step.
bool is_consistent(const LatticeGraph& g, const EdgeOrder& order,
                   std::span<const OrientedEdge> seq);

/// Consistent edge-self-avoiding oriented path between two sources,
/// together with its cancelled-edge set.
class Backbone {
 public:
  /// Validates that `steps` is a connected walk and consistent under
  /// `order`; throws std::invalid_argument otherwise.
  static Backbone from_steps(const LatticeGraph& g, const EdgeOrder& order,
                             std::vector<OrientedEdge> steps);
  /// Zero-step backbone at `x`; identity element for concatenation.
  static Backbone trivial(Vertex x);

  const std::vector<OrientedEdge>& steps() const { return steps_; }
  const std::vector<EdgeId>& cancelled() const { return cancelled_; }
  std::vector<EdgeId> path_edges() const;
  Vertex source() const { return source_; }
  Vertex target() const { return target_; }
  std::size_t length() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }

  nlohmann::json to_json() const;
  static Backbone from_json(const LatticeGraph& g, const EdgeOrder& order, const nlohmann::json& j);

  friend bool operator==(const Backbone& a, const Backbone& b) {
    return a.source_ == b.source_ && a.target_ == b.target_ && a.steps_ == b.steps_;
  }

 private:
  std::vector<OrientedEdge> steps_;
  std::vector<EdgeId> cancelled_;
  Vertex source_ = 0;
  Vertex target_ = 0;
};

/// w1 followed by w2; throws unless w1 ends where w2 starts and the
/// concatenation is consistent.
Backbone concatenate(const LatticeGraph& g, const EdgeOrder& order, const Backbone& w1,
                     const Backbone& w2);

/// Backbone of a current with sources {x, y}: the lexicographically
/// smallest edge-self-avoiding path from x to y through odd edges.
Backbone extract_backbone(const LatticeGraph& g, const CurrentConfiguration& n, Vertex x,
                          const EdgeOrder& order);

/// All backbones from x to y over edges with nonzero coupling. Paths stop
/// at their first visit to y. Throws BudgetExceeded past `limit` results.
std::vector<Backbone> enumerate_backbones(const LatticeGraph& g, const EdgeOrder& order, Vertex x,
                                          Vertex y, std::size_t limit = 2'000'000);

/// Iterates every current with entries <= cap (optionally restricted to a
/// given source set) exactly once, in odometer order.
class CurrentEnumerator {
 public:
  static constexpr double kBudget = 5e7;

  CurrentEnumerator(const LatticeGraph& g, int cap,
                    std::optional<std::vector<Vertex>> source_constraint = std::nullopt);

  std::optional<CurrentConfiguration> next();

 private:
  bool advance();

  const LatticeGraph* g_;
  int cap_;
  std::uint64_t target_parity_ = 0;
  bool constrained_ = false;
  std::vector<int> values_;
  std::uint64_t parity_ = 0;
  std::vector<std::uint64_t> edge_masks_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<CurrentConfiguration> enumerate_currents(
    const LatticeGraph& g, int cap, std::optional<std::vector<Vertex>> source_constraint = std::nullopt);

nlohmann::json current_to_json(const CurrentConfiguration& n);
CurrentConfiguration current_from_json(const LatticeGraph& g, const nlohmann::json& j);

}  // namespace ising
