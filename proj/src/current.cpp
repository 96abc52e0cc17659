#include "ising/current.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ising/errors.hpp"
#include "ising/rng.hpp"

namespace ising {

EdgeMask all_edges(const LatticeGraph& g) { return EdgeMask(g.edge_count(), true); }

EdgeMask edge_mask(const LatticeGraph& g, std::span<const EdgeId> edges) {
  EdgeMask mask(g.edge_count(), false);
  for (EdgeId e : edges) mask.at(e) = true;
  return mask;
}

std::vector<Vertex> sources(const LatticeGraph& g, const CurrentConfiguration& n) {
  std::vector<char> odd(g.vertex_count(), 0);
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (n.values[e] & 1) {
      odd[g.edge(e).u] ^= 1;
      odd[g.edge(e).v] ^= 1;
    }
  }
  std::vector<Vertex> out;
  for (Vertex v = 0; v < g.vertex_count(); ++v)
    if (odd[v]) out.push_back(v);
  return out;
}

double standard_edge_weight(int k, double beta_coupling) {
  if (k == 0) return 1.0;
  return std::exp(k * std::log(beta_coupling) - std::lgamma(k + 1.0));
}

double weight(const LatticeGraph& g, const CurrentConfiguration& n, double beta) {
  if (beta < 0) throw std::invalid_argument("weight: beta must be nonnegative");
  double w = 1.0;
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const int k = n.values.at(e);
    if (k == 0) continue;
    double term = 1.0;
    const double b = beta * g.coupling(e);
    for (int i = 1; i <= k; ++i) term *= b / i;
    w *= term;
  }
  return w;
}

bool connected(const LatticeGraph& g, const CurrentConfiguration& n, Vertex x, Vertex y,
               const EdgeMask& sub) {
  if (x == y) return true;
  std::vector<char> seen(g.vertex_count(), 0);
  std::vector<Vertex> stack{x};
  seen[x] = 1;
  while (!stack.empty()) {
    const Vertex v = stack.back();
    stack.pop_back();
    for (const Incidence& inc : g.incident(v)) {
      if (!sub[inc.edge] || n.values[inc.edge] <= 0 || seen[inc.neighbor]) continue;
      if (inc.neighbor == y) return true;
      seen[inc.neighbor] = 1;
      stack.push_back(inc.neighbor);
    }
  }
  return false;
}

OrientedEdge orient(const LatticeGraph& g, Vertex from, Vertex to) {
  for (const Incidence& inc : g.incident(from))
    if (inc.neighbor == to) return OrientedEdge{from, to, inc.edge, inc.direction};
  throw std::invalid_argument("orient: vertices are not adjacent");
}

std::string EdgeOrder::name() const {
  switch (kind_) {
    case Kind::lexicographic:
      return "lexicographic";
    case Kind::reversed:
      return "reversed";
    case Kind::hashed:
      return "hashed:" + std::to_string(seed_);
  }
  return "unknown";
}

std::uint64_t EdgeOrder::key(const LatticeGraph& g, Vertex v, int direction) const {
  const auto lex = static_cast<std::uint64_t>(v) * static_cast<std::uint64_t>(g.direction_count()) +
                   static_cast<std::uint64_t>(direction);
  switch (kind_) {
    case Kind::lexicographic:
      return lex;
    case Kind::reversed:
      return std::numeric_limits<std::uint64_t>::max() - lex;
    case Kind::hashed: {
      std::uint64_t h = splitmix64(seed_ ^ 0x9e3779b97f4a7c15ULL);
      for (int c : g.coord(v)) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
      return splitmix64(h ^ static_cast<std::uint64_t>(direction));
    }
  }
  return lex;
}

bool EdgeOrder::precedes(const LatticeGraph& g, const OrientedEdge& a, const OrientedEdge& b) const {
  const std::uint64_t ka = key(g, a.from, a.direction);
  const std::uint64_t kb = key(g, b.from, b.direction);
  if (ka != kb) return ka < kb;
  if (a.from != b.from) return a.from < b.from;
  return a.direction < b.direction;
}

namespace {

// Edges cancelled by a single step, appended to `out`.
void step_cancellations(const LatticeGraph& g, const EdgeOrder& order, const OrientedEdge& step,
                        std::vector<EdgeId>& out) {
  out.push_back(step.edge);
  for (const Incidence& inc : g.incident(step.from)) {
    const OrientedEdge other{step.from, inc.neighbor, inc.edge, inc.direction};
    if (order.precedes(g, other, step)) out.push_back(inc.edge);
  }
}

void sort_unique(std::vector<EdgeId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::vector<EdgeId> cancelled_edges(const LatticeGraph& g, const EdgeOrder& order,
                                    std::span<const OrientedEdge> prefix) {
  std::vector<EdgeId> out;
  for (const OrientedEdge& step : prefix) step_cancellations(g, order, step, out);
  sort_unique(out);
  return out;
}

bool is_consistent(const LatticeGraph& g, const EdgeOrder& order,
                   std::span<const OrientedEdge> seq) {
  std::vector<char> cancelled(g.edge_count(), 0);
  std::vector<EdgeId> scratch;
  for (const OrientedEdge& step : seq) {
    if (cancelled.at(step.edge)) return false;
    scratch.clear();
    step_cancellations(g, order, step, scratch);
    for (EdgeId e : scratch) cancelled[e] = 1;
  }
  return true;
}

Backbone Backbone::from_steps(const LatticeGraph& g, const EdgeOrder& order,
                              std::vector<OrientedEdge> steps) {
  if (steps.empty()) throw std::invalid_argument("backbone: use Backbone::trivial for empty paths");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const OrientedEdge& s = steps[i];
    if (s.edge >= g.edge_count() || orient(g, s.from, s.to) != s)
      throw std::invalid_argument("backbone: step is not an oriented edge of the graph");
    if (i > 0 && steps[i - 1].to != s.from)
      throw std::invalid_argument("backbone: steps do not form a walk");
  }
  if (!is_consistent(g, order, steps)) throw std::invalid_argument("backbone: inconsistent sequence");
  Backbone b;
  b.source_ = steps.front().from;
  b.target_ = steps.back().to;
  b.cancelled_ = cancelled_edges(g, order, steps);
  b.steps_ = std::move(steps);
  return b;
}

Backbone Backbone::trivial(Vertex x) {
  Backbone b;
  b.source_ = x;
  b.target_ = x;
  return b;
}

std::vector<EdgeId> Backbone::path_edges() const {
  std::vector<EdgeId> out;
  out.reserve(steps_.size());
  for (const OrientedEdge& s : steps_) out.push_back(s.edge);
  return out;
}

nlohmann::json Backbone::to_json() const {
  nlohmann::json steps = nlohmann::json::array();
  for (const OrientedEdge& s : steps_) steps.push_back({s.from, s.to});
  return {{"source", source_}, {"target", target_}, {"steps", steps}};
}

Backbone Backbone::from_json(const LatticeGraph& g, const EdgeOrder& order, const nlohmann::json& j) {
  std::vector<OrientedEdge> steps;
  for (const auto& s : j.at("steps")) steps.push_back(orient(g, s.at(0).get<Vertex>(), s.at(1).get<Vertex>()));
  if (steps.empty()) return trivial(j.at("source").get<Vertex>());
  return from_steps(g, order, std::move(steps));
}

Backbone concatenate(const LatticeGraph& g, const EdgeOrder& order, const Backbone& w1,
                     const Backbone& w2) {
  if (w1.target() != w2.source()) throw std::invalid_argument("concatenate: endpoints do not match");
  if (w1.empty()) return w2;
  if (w2.empty()) return w1;
  std::vector<OrientedEdge> steps = w1.steps();
  steps.insert(steps.end(), w2.steps().begin(), w2.steps().end());
  return Backbone::from_steps(g, order, std::move(steps));
}

namespace {

// Outgoing candidate steps at v in increasing order.
std::vector<OrientedEdge> ordered_steps(const LatticeGraph& g, const EdgeOrder& order, Vertex v) {
  std::vector<OrientedEdge> out;
  for (const Incidence& inc : g.incident(v)) out.push_back(OrientedEdge{v, inc.neighbor, inc.edge, inc.direction});
  std::sort(out.begin(), out.end(),
            [&](const OrientedEdge& a, const OrientedEdge& b) { return order.precedes(g, a, b); });
  return out;
}

struct BackboneSearch {
  const LatticeGraph& g;
  const EdgeOrder& order;
  Vertex target;
  std::vector<std::vector<OrientedEdge>> steps_at;
  std::vector<int> cancel_count;
  std::vector<OrientedEdge> path;

  BackboneSearch(const LatticeGraph& graph, const EdgeOrder& ord, Vertex y)
      : g(graph), order(ord), target(y), cancel_count(graph.edge_count(), 0) {
    steps_at.reserve(g.vertex_count());
    for (Vertex v = 0; v < g.vertex_count(); ++v) steps_at.push_back(ordered_steps(g, order, v));
  }

  // Applies the cancellations of taking the k-th ordered step at v.
  void cancel(Vertex v, std::size_t k, int delta) {
    for (std::size_t i = 0; i <= k; ++i) cancel_count[steps_at[v][i].edge] += delta;
  }
};

bool extract_dfs(BackboneSearch& s, const CurrentConfiguration& n, Vertex v) {
  if (v == s.target) return true;
  const auto& steps = s.steps_at[v];
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const OrientedEdge& step = steps[k];
    if ((n.values[step.edge] & 1) == 0 || s.cancel_count[step.edge] > 0) continue;
    s.cancel(v, k, +1);
    s.path.push_back(step);
    if (extract_dfs(s, n, step.to)) return true;
    s.path.pop_back();
    s.cancel(v, k, -1);
  }
  return false;
}

void enumerate_dfs(BackboneSearch& s, Vertex v, std::vector<std::vector<OrientedEdge>>& out,
                   std::size_t limit) {
  if (v == s.target && !s.path.empty()) {
    if (out.size() >= limit) throw BudgetExceeded("enumerate_backbones: result limit exceeded");
    out.push_back(s.path);
    return;
  }
  const auto& steps = s.steps_at[v];
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const OrientedEdge& step = steps[k];
    if (s.cancel_count[step.edge] > 0 || !s.g.is_active(step.edge)) continue;
    s.cancel(v, k, +1);
    s.path.push_back(step);
    enumerate_dfs(s, step.to, out, limit);
    s.path.pop_back();
    s.cancel(v, k, -1);
  }
}

}  // namespace

Backbone extract_backbone(const LatticeGraph& g, const CurrentConfiguration& n, Vertex x,
                          const EdgeOrder& order) {
  const std::vector<Vertex> src = sources(g, n);
  if (src.size() != 2 || (src[0] != x && src[1] != x))
    throw std::invalid_argument("extract_backbone: current must have sources {x, y} with x given");
  const Vertex y = src[0] == x ? src[1] : src[0];
  BackboneSearch search(g, order, y);
  if (!extract_dfs(search, n, x))
    throw std::logic_error("extract_backbone: no odd path between the sources (parity violated)");
  return Backbone::from_steps(g, order, std::move(search.path));
}

std::vector<Backbone> enumerate_backbones(const LatticeGraph& g, const EdgeOrder& order, Vertex x,
                                          Vertex y, std::size_t limit) {
  if (x >= g.vertex_count() || y >= g.vertex_count())
    throw std::invalid_argument("enumerate_backbones: vertex outside the graph");
  if (x == y) return {Backbone::trivial(x)};
  BackboneSearch search(g, order, y);
  std::vector<std::vector<OrientedEdge>> paths;
  enumerate_dfs(search, x, paths, limit);
  std::vector<Backbone> out;
  out.reserve(paths.size());
  for (auto& p : paths) out.push_back(Backbone::from_steps(g, order, std::move(p)));
  return out;
}

CurrentEnumerator::CurrentEnumerator(const LatticeGraph& g, int cap,
                                     std::optional<std::vector<Vertex>> source_constraint)
    : g_(&g), cap_(cap), values_(g.edge_count(), 0) {
  if (cap < 0) throw std::invalid_argument("enumerate_currents: cap must be nonnegative");
  if (std::pow(cap + 1.0, static_cast<double>(g.edge_count())) > kBudget)
    throw BudgetExceeded("enumerate_currents: (cap+1)^|E| exceeds the enumeration budget");
  if (g.vertex_count() > 64) throw BudgetExceeded("enumerate_currents: more than 64 vertices");
  edge_masks_.resize(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e)
    edge_masks_[e] = (1ULL << g.edge(e).u) ^ (1ULL << g.edge(e).v);
  if (source_constraint) {
    constrained_ = true;
    for (Vertex v : *source_constraint) {
      if (v >= g.vertex_count()) throw std::invalid_argument("enumerate_currents: source outside graph");
      target_parity_ ^= 1ULL << v;
    }
  }
}

bool CurrentEnumerator::advance() {
  for (std::size_t e = 0; e < values_.size(); ++e) {
    if (values_[e] < cap_) {
      ++values_[e];
      parity_ ^= edge_masks_[e];
      return true;
    }
    if (values_[e] & 1) parity_ ^= edge_masks_[e];
    values_[e] = 0;
  }
  return false;
}

std::optional<CurrentConfiguration> CurrentEnumerator::next() {
  while (!done_) {
    if (started_) {
      if (!advance()) {
        done_ = true;
        break;
      }
    }
    started_ = true;
    if (!constrained_ || parity_ == target_parity_) return CurrentConfiguration{values_};
  }
  return std::nullopt;
}

std::vector<CurrentConfiguration> enumerate_currents(const LatticeGraph& g, int cap,
                                                     std::optional<std::vector<Vertex>> source_constraint) {
  CurrentEnumerator it(g, cap, std::move(source_constraint));
  std::vector<CurrentConfiguration> out;
  while (auto n = it.next()) out.push_back(std::move(*n));
  return out;
}

nlohmann::json current_to_json(const CurrentConfiguration& n) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t e = 0; e < n.values.size(); ++e)
    if (n.values[e] != 0) j[std::to_string(e)] = n.values[e];
  return j;
}

CurrentConfiguration current_from_json(const LatticeGraph& g, const nlohmann::json& j) {
  CurrentConfiguration n = CurrentConfiguration::zero(g);
  for (const auto& [key, value] : j.items()) {
    const std::size_t e = std::stoul(key);
    const int k = value.get<int>();
    if (e >= g.edge_count() || k < 0) throw std::invalid_argument("current json: bad entry");
    n.values[e] = k;
  }
  return n;
}

}  // namespace ising
