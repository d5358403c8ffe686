#pragma once

// Graph builders and reference computations shared by the test suites. The
// reference routines are deliberately naive and never call into the code
// paths they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rrc/graph.hpp"
#include "rrc/markov.hpp"
#include "rrc/simulator.hpp"

namespace rrc::testing {

inline Graph two_node(double q = 0.9) { return Graph::create(2, {{0, 1, q}, {1, 0, q}}); }

inline Graph ring(int m, double q = 0.5) {
  std::vector<Link> links;
  for (int i = 0; i < m; ++i) links.push_back({i, (i + 1) % m, q});
  return Graph::create(m, links);
}

inline Graph complete(int m, double q = 0.8) {
  std::vector<Link> links;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) links.push_back({i, j, q});
  return Graph::create(m, links);
}

/// Hub 0 talks to `leaves` nodes, every leaf talks back.
inline Graph star(int leaves, double q = 0.7) {
  std::vector<Link> links;
  for (int i = 1; i <= leaves; ++i) {
    links.push_back({0, i, q});
    links.push_back({i, 0, q});
  }
  return Graph::create(leaves + 1, links);
}

/// Strongly connected random graph: a ring plus random extra links, with
/// random reliabilities in [q_min, 1].
inline Graph random_graph(int m, std::mt19937_64& rng, double q_min = 0.2,
                          double extra_prob = 0.3, int max_links = 1 << 20) {
  std::uniform_real_distribution<double> uq(q_min, 1.0);
  std::bernoulli_distribution extra(extra_prob);
  std::vector<Link> links;
  if (m > 1) {
    for (int i = 0; i < m; ++i) links.push_back({i, (i + 1) % m, uq(rng)});
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == j || j == (i + 1) % m) continue;
      if (static_cast<int>(links.size()) >= max_links) break;
      if (extra(rng)) links.push_back({i, j, uq(rng)});
    }
  }
  return Graph::create(m, links);
}

inline Matrix random_stochastic(int rows, std::mt19937_64& rng, double zero_prob = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a(rows, rows);
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < rows; ++c) {
      a(r, c) = u(rng) < zero_prob ? 0.0 : u(rng);
      sum += a(r, c);
    }
    if (sum == 0.0) {
      a(r, r) = 1.0;
      sum = 1.0;
    }
    a.row(r) /= sum;
  }
  return a;
}

/// delta straight from its definition, looping over every row pair.
inline double reference_delta(const Matrix& a) {
  double best = 0.0;
  for (int j = 0; j < a.cols(); ++j)
    for (int r1 = 0; r1 < a.rows(); ++r1)
      for (int r2 = 0; r2 < a.rows(); ++r2) best = std::max(best, std::abs(a(r1, j) - a(r2, j)));
  return best;
}

/// lambda straight from its definition, including the pairs r1 == r2.
inline double reference_lambda(const Matrix& a) {
  double min_overlap = 1e300;
  for (int r1 = 0; r1 < a.rows(); ++r1)
    for (int r2 = 0; r2 < a.rows(); ++r2) {
      double s = 0.0;
      for (int j = 0; j < a.cols(); ++j) s += std::min(a(r1, j), a(r2, j));
      min_overlap = std::min(min_overlap, s);
    }
  return 1.0 - min_overlap;
}

/// Augmented state after replaying `masks`, computed from the buffer
/// recursion instead of the cumulative counters: a buffer accumulates the
/// share y/D of its sender while the link is down and is flushed together
/// with the fresh share when the link comes up.
struct BufferModelState {
  std::vector<double> y;
  std::vector<double> buffer;  // canonical link order
};

inline std::vector<BufferModelState> buffer_model(const Graph& g, std::vector<double> y0,
                                                  const std::vector<DropMask>& masks) {
  std::vector<BufferModelState> out;
  BufferModelState s{std::move(y0), std::vector<double>(g.link_count(), 0.0)};
  out.push_back(s);
  for (const DropMask& mask : masks) {
    BufferModelState next{std::vector<double>(g.node_count(), 0.0),
                          std::vector<double>(g.link_count(), 0.0)};
    for (int i = 0; i < g.node_count(); ++i) next.y[i] += s.y[i] / g.out_degree(i);
    for (int e = 0; e < g.link_count(); ++e) {
      const Link& l = g.links()[e];
      const double pending = s.y[l.from] / g.out_degree(l.from) + s.buffer[e];
      if (mask.reliable[e]) {
        next.y[l.to] += pending;
      } else {
        next.buffer[e] = pending;
      }
    }
    s = next;
    out.push_back(s);
  }
  return out;
}

/// Every mask of a graph, as an integer bit pattern expanded in link order.
inline DropMask mask_from_bits(const Graph& g, std::uint64_t bits, int round = 1) {
  DropMask mask{round, std::vector<std::uint8_t>(g.link_count())};
  for (int e = 0; e < g.link_count(); ++e) mask.reliable[e] = (bits >> e) & 1u;
  return mask;
}

}  // namespace rrc::testing
