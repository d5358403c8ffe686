#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rrc/graph.hpp"
#include "rrc/simulator.hpp"

namespace rrc {

/// Dense matrix over the augmented index space. State vectors are rows and
/// multiply from the left: y_k = y_{k-1} * M_k.
using Matrix = Eigen::MatrixXd;

/// Tolerance for single-matrix stochasticity checks.
inline constexpr double kExactTolerance = 1e-12;
/// Tolerance for long products, which accumulate rounding.
inline constexpr double kProductTolerance = 1e-10;

bool is_row_stochastic(const Matrix& a, double tol);

/// Transition matrix M_k of one round, built from its drop mask.
class TransitionMatrix {
 public:
  TransitionMatrix(const Graph& graph, DropMask mask);

  const Matrix& values() const noexcept { return values_; }
  const DropMask& mask() const noexcept { return mask_; }
  int size() const noexcept { return static_cast<int>(values_.rows()); }

 private:
  Matrix values_;
  DropMask mask_;
};

/// Node row i: 1/D_i on itself, and for each out-link (i,j) 1/D_i on j when
/// the link delivered, otherwise 1/D_i on the link's buffer. Buffer row
/// (i,j): all mass to j when the link delivered, otherwise kept.
TransitionMatrix build_matrix(const Graph& graph, const DropMask& mask);

/// m x m loss-free iteration matrix, entry [j,i] = 1/D_j for each j in I_i.
Matrix ideal_matrix(const Graph& graph);

/// Forward product T_k = M_1 ... M_k with a running accumulator for the
/// current block of `block_length` factors.
class ProductState {
 public:
  ProductState(int size, int block_length);

  /// T <- T * M. Returns the completed block W when k reaches a multiple of
  /// the block length. Throws std::invalid_argument on a size mismatch and
  /// std::runtime_error if T drifts from row-stochastic beyond
  /// kProductTolerance.
  std::optional<Matrix> accumulate(const Matrix& m);
  std::optional<Matrix> accumulate(const TransitionMatrix& m) { return accumulate(m.values()); }

  const Matrix& product() const noexcept { return product_; }
  int rounds() const noexcept { return rounds_; }
  int block_length() const noexcept { return block_length_; }

 private:
  Matrix product_;
  Matrix block_;
  int rounds_ = 0;
  int block_length_;
};

struct OracleFailure {
  int round = 0;
  int index = 0;
  char component = 'y';
  double deviation = 0.0;
};

struct OracleReport {
  /// max |protocol - y0 T_k| over both components and all indices, per
  /// round; entry 0 is round 0.
  std::vector<double> max_deviation;
  double worst = 0.0;
  std::optional<OracleFailure> first_failure;

  bool passed() const { return !first_failure.has_value(); }
};

/// Rebuilds M_k from each recorded mask and compares the augmented protocol
/// state (y at nodes, sigma - rho at buffers) against y_0 T_k, and likewise
/// for z. A deviation above `tol` fails the check.
OracleReport oracle_check(const Trace& trace, const Graph& graph, double tol);

/// n x n dump with a header row of canonical labels.
void write_matrix_csv(std::ostream& out, const Matrix& a, const AugmentedSpace& space);

}  // namespace rrc
