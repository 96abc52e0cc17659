#include "ising/lattice.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace ising {

std::string to_string(Boundary bc) {
  return bc == Boundary::free ? "free" : "periodic";
}

Boundary boundary_from_string(const std::string& name) {
  if (name == "free") return Boundary::free;
  if (name == "periodic") return Boundary::periodic;
  throw std::invalid_argument("unknown boundary condition '" + name + "'");
}

LatticeGraph LatticeGraph::box(int dimension, const std::vector<int>& radii, Boundary bc) {
  if (dimension < 1) throw std::invalid_argument("box dimension must be >= 1");
  if (static_cast<int>(radii.size()) != dimension)
    throw std::invalid_argument("box needs one radius per axis");
  Coord lower(radii.size());
  Coord upper(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] < 0) throw std::invalid_argument("box radii must be nonnegative");
    lower[i] = -radii[i];
    upper[i] = radii[i];
  }
  return box(lower, upper, bc);
}

LatticeGraph LatticeGraph::box(const Coord& lower, const Coord& upper, Boundary bc) {
  if (lower.empty()) throw std::invalid_argument("box dimension must be >= 1");
  if (lower.size() != upper.size())
    throw std::invalid_argument("box corners have different dimensions");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (upper[i] < lower[i]) throw std::invalid_argument("box upper corner below lower corner");
    if (bc == Boundary::periodic && upper[i] - lower[i] + 1 < 3)
      throw std::invalid_argument("periodic box needs side >= 3 (radius >= 1) on every axis");
  }
  LatticeGraph g;
  g.lower_ = lower;
  g.upper_ = upper;
  g.bc_ = bc;
  g.build();
  return g;
}

void LatticeGraph::build() {
  const int d = dimension();
  strides_.assign(d, 1);
  vertex_count_ = 1;
  for (int i = d - 1; i >= 0; --i) {
    strides_[i] = vertex_count_;
    vertex_count_ *= static_cast<std::size_t>(side(i));
  }

  edges_.clear();
  for (Vertex v = 0; v < vertex_count_; ++v) {
    const Coord x = coord(v);
    for (int axis = 0; axis < d; ++axis) {
      Coord y = x;
      if (x[axis] < upper_[axis]) {
        ++y[axis];
      } else if (bc_ == Boundary::periodic) {
        y[axis] = lower_[axis];
      } else {
        continue;
      }
      edges_.push_back(Edge{v, index(y), axis, 1.0});
    }
  }

  std::vector<std::vector<Incidence>> lists(vertex_count_);
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    lists[ed.u].push_back(Incidence{ed.v, e, 2 * ed.axis});
    lists[ed.v].push_back(Incidence{ed.u, e, 2 * ed.axis + 1});
  }
  incidence_offsets_.assign(vertex_count_ + 1, 0);
  incidences_.clear();
  for (Vertex v = 0; v < vertex_count_; ++v) {
    std::sort(lists[v].begin(), lists[v].end(),
              [](const Incidence& a, const Incidence& b) { return a.direction < b.direction; });
    incidences_.insert(incidences_.end(), lists[v].begin(), lists[v].end());
    incidence_offsets_[v + 1] = incidences_.size();
  }
}

Coord LatticeGraph::coord(Vertex v) const {
  Coord x(lower_.size());
  for (int i = 0; i < dimension(); ++i) {
    x[i] = lower_[i] + static_cast<int>(v / strides_[i]);
    v %= strides_[i];
  }
  return x;
}

bool LatticeGraph::contains(const Coord& x) const {
  if (x.size() != lower_.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
  return true;
}

std::optional<Vertex> LatticeGraph::find(const Coord& x) const {
  if (!contains(x)) return std::nullopt;
  Vertex v = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    v += static_cast<std::size_t>(x[i] - lower_[i]) * strides_[i];
  return v;
}

Vertex LatticeGraph::index(const Coord& x) const {
  auto v = find(x);
  if (!v) throw std::out_of_range("coordinate outside the box");
  return *v;
}

std::span<const Incidence> LatticeGraph::incident(Vertex v) const {
  return std::span<const Incidence>(incidences_).subspan(
      incidence_offsets_[v], incidence_offsets_[v + 1] - incidence_offsets_[v]);
}

std::optional<EdgeId> LatticeGraph::edge_between(Vertex a, Vertex b) const {
  if (a >= vertex_count_ || b >= vertex_count_) return std::nullopt;
  for (const Incidence& inc : incident(a))
    if (inc.neighbor == b) return inc.edge;
  return std::nullopt;
}

Vertex LatticeGraph::other_end(EdgeId e, Vertex v) const {
  const Edge& ed = edges_[e];
  return ed.u == v ? ed.v : ed.u;
}

LatticeGraph LatticeGraph::remove_edges(std::span<const EdgeId> removed) const {
  LatticeGraph g = *this;
  for (EdgeId e : removed) {
    if (e >= edges_.size()) throw std::invalid_argument("remove_edges: id is not an edge of the graph");
    g.edges_[e].coupling = 0.0;
  }
  return g;
}

LatticeGraph LatticeGraph::remove_edges(const std::vector<std::pair<Coord, Coord>>& removed) const {
  std::vector<EdgeId> ids;
  ids.reserve(removed.size());
  for (const auto& [a, b] : removed) {
    auto va = find(a);
    auto vb = find(b);
    std::optional<EdgeId> e = (va && vb) ? edge_between(*va, *vb) : std::nullopt;
    if (!e) throw std::invalid_argument("remove_edges: pair is not an edge of the graph");
    ids.push_back(*e);
  }
  return remove_edges(ids);
}

std::vector<EdgeId> LatticeGraph::removed_edges() const {
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < edges_.size(); ++e)
    if (edges_[e].coupling == 0.0) out.push_back(e);
  return out;
}

nlohmann::json LatticeGraph::to_json() const {
  nlohmann::json j;
  j["d"] = dimension();
  j["bc"] = to_string(bc_);
  bool symmetric = true;
  for (int i = 0; i < dimension(); ++i) symmetric = symmetric && lower_[i] == -upper_[i];
  if (symmetric) {
    j["radii"] = upper_;
  } else {
    j["lower"] = lower_;
    j["upper"] = upper_;
  }
  nlohmann::json removed = nlohmann::json::array();
  for (EdgeId e : removed_edges()) removed.push_back({edges_[e].u, edges_[e].v});
  j["removed_edges"] = removed;
  return j;
}

LatticeGraph LatticeGraph::from_json(const nlohmann::json& j) {
  const int d = j.at("d").get<int>();
  const Boundary bc = boundary_from_string(j.value("bc", std::string("free")));
  LatticeGraph g = j.contains("radii")
                       ? box(d, j.at("radii").get<std::vector<int>>(), bc)
                       : box(j.at("lower").get<Coord>(), j.at("upper").get<Coord>(), bc);
  if (g.dimension() != d) throw std::invalid_argument("graph json: dimension mismatch");
  std::vector<EdgeId> ids;
  for (const auto& pair : j.value("removed_edges", nlohmann::json::array())) {
    auto e = g.edge_between(pair.at(0).get<Vertex>(), pair.at(1).get<Vertex>());
    if (!e) throw std::invalid_argument("graph json: removed pair is not an edge");
    ids.push_back(*e);
  }
  return g.remove_edges(ids);
}

std::string LatticeGraph::fingerprint() const { return to_json().dump(); }

bool operator==(const LatticeGraph& a, const LatticeGraph& b) {
  if (a.lower_ != b.lower_ || a.upper_ != b.upper_ || a.bc_ != b.bc_) return false;
  for (EdgeId e = 0; e < a.edges_.size(); ++e)
    if (a.edges_[e].coupling != b.edges_[e].coupling) return false;
  return true;
}

std::size_t free_box_edge_count(const std::vector<int>& radii) {
  std::size_t total = 0;
  for (std::size_t axis = 0; axis < radii.size(); ++axis) {
    std::size_t term = 2 * static_cast<std::size_t>(radii[axis]);
    for (std::size_t other = 0; other < radii.size(); ++other)
      if (other != axis) term *= 2 * static_cast<std::size_t>(radii[other]) + 1;
    total += term;
  }
  return total;
}

Coord Reflection::apply(const Coord& x) const {
  Coord y = x;
  y.at(axis) = 2 * offset - x.at(axis);
  return y;
}

std::pair<Coord, Coord> Reflection::apply(const std::pair<Coord, Coord>& edge) const {
  return {apply(edge.first), apply(edge.second)};
}

std::vector<Coord> Reflection::apply(const std::vector<Coord>& points) const {
  std::vector<Coord> out;
  out.reserve(points.size());
  for (const Coord& p : points) out.push_back(apply(p));
  return out;
}

BoxBoundary boundary_and_faces(const LatticeGraph& g, const std::vector<int>& inner_radii) {
  const int d = g.dimension();
  if (static_cast<int>(inner_radii.size()) != d)
    throw std::invalid_argument("inner box needs one radius per axis");
  for (int i = 0; i < d; ++i) {
    if (inner_radii[i] < 0 || -inner_radii[i] < g.lower()[i] || inner_radii[i] > g.upper()[i])
      throw std::invalid_argument("inner box is not contained in the graph's box");
  }

  BoxBoundary out;
  for (int axis = 0; axis < d; ++axis) {
    for (int sign : {+1, -1}) {
      out.faces.push_back(Face{axis, sign, {}, Reflection{axis, sign * inner_radii[axis]}});
    }
  }
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    const Coord x = g.coord(v);
    bool inside = true;
    for (int i = 0; i < d; ++i) inside = inside && std::abs(x[i]) <= inner_radii[i];
    if (!inside) continue;
    bool on_boundary = false;
    for (int axis = 0; axis < d; ++axis) {
      if (x[axis] == inner_radii[axis]) {
        out.faces[2 * axis].vertices.push_back(v);
        on_boundary = true;
      }
      if (x[axis] == -inner_radii[axis]) {
        out.faces[2 * axis + 1].vertices.push_back(v);
        on_boundary = true;
      }
    }
    if (on_boundary) out.boundary.push_back(v);
  }
  return out;
}

std::vector<Coord> reflected_images(const Coord& y, const std::vector<int>& inner_radii) {
  if (y.size() != inner_radii.size())
    throw std::invalid_argument("reflected_images: dimension mismatch");
  std::vector<Coord> images;
  for (std::size_t axis = 0; axis < y.size(); ++axis) {
    for (int sign : {+1, -1}) {
      images.push_back(Reflection{static_cast<int>(axis), sign * inner_radii[axis]}.apply(y));
    }
  }
  return images;
}

}  // namespace ising
