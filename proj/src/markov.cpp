#include "rrc/markov.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "rrc/format.hpp"

namespace rrc {

bool is_row_stochastic(const Matrix& a, double tol) {
  if (a.rows() != a.cols() || a.rows() == 0) return false;
  if ((a.array() < -tol).any()) return false;
  return ((a.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

TransitionMatrix::TransitionMatrix(const Graph& graph, DropMask mask)
    : values_(Matrix::Zero(AugmentedSpace(graph).size(), AugmentedSpace(graph).size())),
      mask_(std::move(mask)) {
  if (mask_.reliable.size() != static_cast<std::size_t>(graph.link_count())) {
    throw std::invalid_argument("mask does not match the graph's link count");
  }
  const AugmentedSpace space(graph);
  for (NodeId i = 0; i < graph.node_count(); ++i) {
    const double share = 1.0 / graph.out_degree(i);
    values_(i, i) = share;
    for (int e : graph.out_links(i)) {
      const NodeId j = graph.links()[e].to;
      if (mask_.is_reliable(e)) {
        values_(i, j) = share;
      } else {
        values_(i, space.buffer_index(e)) = share;
      }
    }
  }
  for (int e = 0; e < graph.link_count(); ++e) {
    const int row = space.buffer_index(e);
    if (mask_.is_reliable(e)) {
      values_(row, graph.links()[e].to) = 1.0;
    } else {
      values_(row, row) = 1.0;
    }
  }
}

TransitionMatrix build_matrix(const Graph& graph, const DropMask& mask) {
  return TransitionMatrix(graph, mask);
}

Matrix ideal_matrix(const Graph& graph) {
  const int m = graph.node_count();
  Matrix a = Matrix::Zero(m, m);
  for (NodeId i = 0; i < m; ++i) {
    for (NodeId j : graph.in_neighbors(i)) a(j, i) = 1.0 / graph.out_degree(j);
  }
  return a;
}

ProductState::ProductState(int size, int block_length)
    : product_(Matrix::Identity(size, size)),
      block_(Matrix::Identity(size, size)),
      block_length_(block_length) {
  if (size < 1) throw std::invalid_argument("product size must be positive");
  if (block_length < 1) throw std::invalid_argument("block length must be positive");
}

std::optional<Matrix> ProductState::accumulate(const Matrix& m) {
  if (m.rows() != product_.rows() || m.cols() != product_.cols()) {
    throw std::invalid_argument("factor is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", product is " +
                                std::to_string(product_.rows()) + "x" +
                                std::to_string(product_.cols()));
  }
  product_ = product_ * m;
  block_ = block_ * m;
  ++rounds_;
  if (!is_row_stochastic(product_, kProductTolerance)) {
    throw std::runtime_error("forward product lost row-stochasticity at round " +
                             std::to_string(rounds_));
  }
  if (rounds_ % block_length_ != 0) return std::nullopt;
  Matrix done = std::move(block_);
  block_ = Matrix::Identity(product_.rows(), product_.cols());
  return done;
}

OracleReport oracle_check(const Trace& trace, const Graph& graph, double tol) {
  const AugmentedSpace space(graph);
  const int n = space.size();
  ProductState state(n, 1);

  Eigen::RowVectorXd y0 = Eigen::RowVectorXd::Zero(n);
  Eigen::RowVectorXd z0 = Eigen::RowVectorXd::Zero(n);
  for (NodeId i = 0; i < graph.node_count(); ++i) {
    y0(i) = trace.rounds.at(0).y.at(i);
    z0(i) = trace.rounds.at(0).z.at(i);
  }

  OracleReport report;
  auto compare = [&](int k, char component, const Eigen::RowVectorXd& expected,
                     const std::vector<double>& actual) {
    double worst = 0.0;
    for (int idx = 0; idx < n; ++idx) {
      const double dev = std::abs(actual[idx] - expected(idx));
      // NaN compares false; treat it as an unbounded deviation.
      const double d = std::isnan(dev) ? INFINITY : dev;
      worst = std::max(worst, d);
      if (!(d <= tol) && !report.first_failure) report.first_failure = {k, idx, component, d};
    }
    return worst;
  };

  for (int k = 0; k <= trace.steps(); ++k) {
    if (k > 0) state.accumulate(build_matrix(graph, trace.rounds[k].mask));
    const double dy = compare(k, 'y', y0 * state.product(), trace.augmented_y(k));
    const double dz = compare(k, 'z', z0 * state.product(), trace.augmented_z(k));
    report.max_deviation.push_back(std::max(dy, dz));
    report.worst = std::max(report.worst, report.max_deviation.back());
  }
  return report;
}

void write_matrix_csv(std::ostream& out, const Matrix& a, const AugmentedSpace& space) {
  out << "row";
  for (int c = 0; c < space.size(); ++c) out << ',' << space.label(c);
  out << '\n';
  for (int r = 0; r < a.rows(); ++r) {
    out << space.label(r);
    for (int c = 0; c < a.cols(); ++c) out << ',' << format_real(a(r, c));
    out << '\n';
  }
}

}  // namespace rrc
