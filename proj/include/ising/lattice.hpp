#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ising {

using Vertex = std::size_t;
using EdgeId = std::size_t;
using Coord = std::vector<int>;

enum class Boundary { free, periodic };

std::string to_string(Boundary bc);
Boundary boundary_from_string(const std::string& name);

/// Unordered nearest-neighbour edge. `v` is the neighbour of `u` in the
/// positive direction of `axis` (wrapping for periodic boxes).
struct Edge {
  Vertex u = 0;
  Vertex v = 0;
  int axis = 0;
  double coupling = 1.0;
};

/// Oriented half-edge as seen from a vertex. Direction index is
/// 2*axis for +e_axis and 2*axis+1 for -e_axis.
struct Incidence {
  Vertex neighbor = 0;
  EdgeId edge = 0;
  int direction = 0;
};

/// Finite box [lower_1, upper_1] x ... x [lower_d, upper_d] of Z^d with
/// nearest-neighbour edges and per-edge couplings.
///
/// Vertices are numbered by row-major linearisation of their coordinates
/// (first axis slowest), so vertex order coincides with lexicographic
/// order of coordinates. Instances are immutable; `remove_edges` returns
/// a copy with the affected couplings set to zero, which keeps edge ids
/// stable between a graph and its edge-deleted descendants.
class LatticeGraph {
 public:
  /// Symmetric box [-r_1, r_1] x ... x [-r_d, r_d].
  static LatticeGraph box(int dimension, const std::vector<int>& radii, Boundary bc);
  /// General box with arbitrary integer corners (inclusive).
  static LatticeGraph box(const Coord& lower, const Coord& upper, Boundary bc);

  int dimension() const { return static_cast<int>(lower_.size()); }
  const Coord& lower() const { return lower_; }
  const Coord& upper() const { return upper_; }
  int side(int axis) const { return upper_[axis] - lower_[axis] + 1; }
  Boundary boundary() const { return bc_; }

  std::size_t vertex_count() const { return vertex_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  int direction_count() const { return 2 * dimension(); }

  Coord coord(Vertex v) const;
  bool contains(const Coord& x) const;
  std::optional<Vertex> find(const Coord& x) const;
  /// Throws std::out_of_range when `x` lies outside the box.
  Vertex index(const Coord& x) const;

  const Edge& edge(EdgeId e) const { return edges_[e]; }
  std::span<const Edge> edges() const { return edges_; }
  double coupling(EdgeId e) const { return edges_[e].coupling; }

  /// Incidences of `v`, sorted by direction index.
  std::span<const Incidence> incident(Vertex v) const;
  std::size_t degree(Vertex v) const { return incident(v).size(); }
  std::optional<EdgeId> edge_between(Vertex a, Vertex b) const;
  Vertex other_end(EdgeId e, Vertex v) const;

  /// Copy with zero coupling on every edge in `removed`. Throws
  /// std::invalid_argument for ids that are not edges of this graph.
  LatticeGraph remove_edges(std::span<const EdgeId> removed) const;
  LatticeGraph remove_edges(const std::vector<std::pair<Coord, Coord>>& removed) const;

  /// Edges whose coupling is zero, in id order.
  std::vector<EdgeId> removed_edges() const;
  bool is_active(EdgeId e) const { return edges_[e].coupling > 0.0; }

  nlohmann::json to_json() const;
  static LatticeGraph from_json(const nlohmann::json& j);

  /// Stable textual identity (geometry, boundary and couplings).
  std::string fingerprint() const;

  friend bool operator==(const LatticeGraph& a, const LatticeGraph& b);

 private:
  LatticeGraph() = default;
  void build();

  Coord lower_;
  Coord upper_;
  Boundary bc_ = Boundary::free;
  std::size_t vertex_count_ = 0;
  std::vector<std::size_t> strides_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> incidence_offsets_;
  std::vector<Incidence> incidences_;
};

/// Number of edges of a free box with the given radii (closed form).
std::size_t free_box_edge_count(const std::vector<int>& radii);

/// Mirror plane {x : x_axis = offset} (axis is 0-based).
struct Reflection {
  int axis = 0;
  int offset = 0;

  Coord apply(const Coord& x) const;
  std::pair<Coord, Coord> apply(const std::pair<Coord, Coord>& edge) const;
  std::vector<Coord> apply(const std::vector<Coord>& points) const;
};

struct Face {
  int axis = 0;
  int sign = 1;
  std::vector<Vertex> vertices;
  /// The plane x_axis = sign * radius containing the face.
  Reflection plane;
};

struct BoxBoundary {
  std::vector<Vertex> boundary;
  std::vector<Face> faces;
};

/// Boundary vertex set and the 2d faces of the centred inner box
/// [-r_1, r_1] x ... x [-r_d, r_d] inside `g`. Faces are ordered axis by
/// axis, positive side first.
BoxBoundary boundary_and_faces(const LatticeGraph& g, const std::vector<int>& inner_radii);

/// Images of `y` under the reflections across the 2d face planes of the
/// centred box with the given radii, in face order.
std::vector<Coord> reflected_images(const Coord& y, const std::vector<int>& inner_radii);

}  // namespace ising
