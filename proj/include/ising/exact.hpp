#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ising/current.hpp"
#include "ising/lattice.hpp"

namespace ising {

/// Largest vertex count handled by full spin enumeration.
inline constexpr std::size_t kEnumerationBudget = 24;
/// Largest slice (cross-section) handled by the transfer-matrix oracle.
inline constexpr std::size_t kTransferSliceBudget = 20;

enum class ExactMethod { automatic, enumeration, transfer_matrix };

using VertexSet = std::vector<Vertex>;

/// Brute-force spin sums. Enumeration walks all 2^|V| configurations in
/// Gray-code order; the transfer matrix sweeps slices of constant first
/// coordinate and needs free boundary conditions along that axis.
/// `automatic` uses enumeration up to the budget, the transfer matrix
/// beyond it, and throws BudgetExceeded when neither applies.
double log_partition_function(const LatticeGraph& g, double beta, double field,
                              ExactMethod method = ExactMethod::automatic);

/// <sigma_A> for every A in `sets`, computed in one pass per method.
std::vector<double> correlations(const LatticeGraph& g, double beta, double field,
                                 std::span<const VertexSet> sets,
                                 ExactMethod method = ExactMethod::automatic);

/// <sigma_A> by full enumeration. Refuses graphs above the budget.
double exact_correlation(const LatticeGraph& g, double beta, double field, const VertexSet& a);

/// V x V matrix of <sigma_x sigma_y>, row-major.
std::vector<double> pair_correlation_matrix(const LatticeGraph& g, double beta, double field,
                                            ExactMethod method = ExactMethod::automatic);

struct CorrelationTable {
  std::string graph_fingerprint;
  double beta = 0.0;
  double field = 0.0;
  std::map<VertexSet, double> values;
};

CorrelationTable correlation_table(const LatticeGraph& g, double beta, double field,
                                   const std::vector<VertexSet>& sets,
                                   ExactMethod method = ExactMethod::automatic);

/// sum_{x,y} <sigma_x sigma_y> / |V| at zero field.
double exact_susceptibility(const LatticeGraph& g, double beta,
                            ExactMethod method = ExactMethod::automatic);

/// Closed form <sigma_x sigma_y> on a free path at distance k: tanh(beta)^k.
double path_correlation(double beta, int distance);

/// Ratio of sourceless current sums with and without the constraint that
/// every edge in `even_edges` carries an even current. Evaluated in closed
/// form as prod_{e in S} cosh(beta J_e) * Z(G \ S) / Z(G).
double parity_constrained_sum(const LatticeGraph& g, double beta, std::span<const EdgeId> even_edges,
                              ExactMethod method = ExactMethod::automatic);

/// Backbone weight rho_G(w) = prod_{e in w} tanh(beta J_e) times the
/// parity-constrained ratio over the cancelled set. The trivial backbone
/// has weight 1.
double rho_exact(const LatticeGraph& g, double beta, const Backbone& w,
                 ExactMethod method = ExactMethod::automatic);

struct SwitchingReport {
  double max_deviation = 0.0;
  double max_level_weight = 0.0;  // largest |LHS| over the levels checked
  std::size_t levels = 0;         // combined configurations N visited
  std::size_t nonzero_levels = 0;
  double lhs_total = 0.0;  // both sides summed over all levels checked
  double rhs_total = 0.0;
};

/// Level-wise switching identity: for every combined current N on G with
/// entries <= cap, compares
///   sum_{n+m=N, dn=A, dm={x,y}} w(n) w(m)
/// with
///   sum_{n+m=N, dn=A^{x,y}, dm=0} w(n) w(m) 1[x <-> y in G1 under N],
/// where m is supported on the edges of `g1_edges`. The per-level identity
/// is exact, so the cap introduces no truncation error. `edge_weight`
/// replaces the per-edge factor (used as a negative control).
SwitchingReport verify_switching(const LatticeGraph& g, const EdgeMask& g1_edges, const VertexSet& a,
                                 Vertex x, Vertex y, int cap, double beta,
                                 const EdgeWeightFn& edge_weight = standard_edge_weight);

struct ExpansionReport {
  double correlation = 0.0;
  double backbone_sum = 0.0;
  double deviation = 0.0;
  std::size_t backbones = 0;
};

/// |<sigma_x sigma_y> - sum_{dw = {x,y}} rho(w)| with the backbones
/// enumerated under `order`.
ExpansionReport verify_backbone_expansion(const LatticeGraph& g, double beta, Vertex x, Vertex y,
                                          const EdgeOrder& order);

struct ConcatReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double deviation = 0.0;
};

/// |rho_G(w1 o w2) - rho_G(w1) rho_{G \ cancelled(w1)}(w2)|. Throws if the
/// concatenation is inconsistent.
ConcatReport verify_concat(const LatticeGraph& g, double beta, const Backbone& w1, const Backbone& w2,
                           const EdgeOrder& order);

struct InequalityReport {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs for upper bounds, lhs - rhs for lower bounds
};

inline constexpr double kInequalityTolerance = 1e-12;

/// Checks <s_u s_y> >= <s_u s_{ybar}> on D with the edges `reflected_edges`
/// removed, ybar being the mirror image of y in the plane x_1 = 0. D must
/// be symmetric in its first axis, every removed edge must lie in the
/// half-space x_1 <= 0, u_1 = 0 and y_1 >= 0.
InequalityReport verify_reflection(const LatticeGraph& d, std::span<const EdgeId> reflected_edges,
                                   double beta, Vertex u, Vertex y);

/// Checks <s_x s_y>_outer - <s_x s_y>_inner <= sum_i <s_x s_{y^i}>_outer for
/// the centred inner box with radii `inner_radii` and the 2d mirror images
/// y^i of y in its face planes. Both boxes use free boundary conditions.
InequalityReport verify_tfin(const LatticeGraph& outer, const std::vector<int>& inner_radii,
                             double beta, const Coord& x, const Coord& y);

}  // namespace ising
