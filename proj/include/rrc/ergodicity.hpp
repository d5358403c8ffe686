#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rrc/graph.hpp"
#include "rrc/markov.hpp"

namespace rrc {

/// Max over columns of the column's spread (max - min). Throws
/// std::invalid_argument for inputs that are not row-stochastic.
double delta(const Matrix& a);

/// 1 - min over row pairs of sum_j min(a[i1,j], a[i2,j]).
double lambda(const Matrix& a);

/// Combinatorial test: every pair of rows shares a column where both are
/// positive.
bool is_scrambling(const Matrix& a);

/// Numerical test: lambda(a) < 1. Agrees with is_scrambling.
bool is_scrambling_by_lambda(const Matrix& a);

struct HajnalBound {
  double lhs = 0.0;     // delta(A_1 ... A_p)
  double middle = 0.0;  // lambda(A_1)...lambda(A_{p-1}) * delta(A_p)
  double rhs = 0.0;     // lambda(A_1)...lambda(A_p)

  bool holds(double slack) const { return lhs <= middle + slack && middle <= rhs + slack; }
};

HajnalBound hajnal_bound_check(std::span<const Matrix> factors);

/// Smallest positive entry any transition matrix can have: min_i 1/D_i.
double derive_c(const Graph& graph);

/// Index of primitivity of the loss-free node matrix: the smallest p with
/// ideal_matrix(g)^p entrywise positive.
int derive_l(const Graph& graph);

/// Smallest p such that the all-reliable augmented matrix raised to p has
/// every node column positive in every row, buffer rows included. This is
/// the W-block length for which scrambling has positive probability.
int derive_block_length(const Graph& graph);

/// Scrambling statistics of W blocks of a given length.
struct BlockStatistics {
  int block_length = 0;
  double w = 0.0;          // probability that W is scrambling
  double d = 0.0;          // max lambda(W) over scrambling W
  std::vector<double> gamma;  // per node: probability W has that node's column positive
  std::size_t samples = 0;    // 0 for exact enumeration
  std::size_t scrambling = 0;
  bool exact = false;

  /// No scrambling block observed: w is 0 and derived bounds are undefined.
  bool insufficient() const { return !(w > 0.0); }
  /// Binomial standard error of a sampled w (0 when exact).
  double w_stderr() const;
};

/// Largest link_count * block_length handled by exact enumeration.
inline constexpr int kMaxEnumerationBits = 16;

/// Exact w, d, gamma by enumerating every mask sequence of one block,
/// weighted by its probability. Throws std::invalid_argument beyond
/// kMaxEnumerationBits.
BlockStatistics enumerate_w_d(const Graph& graph, int block_length);

/// Monte Carlo w, d, gamma from `samples` independent blocks. Sample s draws
/// its masks from LinkRng(seed, s).
BlockStatistics estimate_w_d(const Graph& graph, int block_length, std::size_t samples,
                             std::uint64_t seed, unsigned threads = 1);

/// Constants of the geometric decay bound: with probability above
/// 1 - alpha^k, delta(T_k) <= beta^k once k >= k_threshold.
struct ErgodicityConstants {
  double c = 0.0;
  int l = 0;             // primitivity index of the node matrix
  int block_length = 0;  // W block length used by every bound below
  double w = 0.0;
  double d = 0.0;
  bool defined = false;  // false when w == 0 or d >= 1
  double alpha = 0.0;    // exp(-w / (16 block_length))
  double beta = 0.0;     // d^(w / (8 block_length))
  int k_threshold = 0;   // ceil(8 block_length / w)
};

ErgodicityConstants derive_constants(const Graph& graph, const BlockStatistics& stats);

struct BlockLambda {
  int block = 0;  // 1-based W index
  double lambda = 0.0;
  bool scrambling = false;
};

/// delta(T_k) for k = 1..K (delta[k-1]) and lambda(W_j) per completed block.
struct ErgodicityTrace {
  std::vector<double> delta;
  std::vector<BlockLambda> blocks;
};

ErgodicityTrace trace_ergodicity(const Graph& graph, std::span<const DropMask> masks,
                                 int block_length);

struct Certification {
  int k = 0;
  double delta = 0.0;
  double beta_pow = 0.0;
  bool in_domain = false;  // k >= k_threshold
  bool certified = false;  // in_domain and delta <= beta^k
};

/// Evaluates delta(T_k) <= beta^k for every round; rounds below the
/// threshold are reported but not certified. Requires defined constants.
std::vector<Certification> certify_convergence(std::span<const double> delta_trace,
                                               const ErgodicityConstants& constants);

}  // namespace rrc
