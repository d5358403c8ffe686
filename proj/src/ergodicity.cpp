#include "rrc/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rrc {
namespace {

// Looser than kProductTolerance so long forward products are accepted.
constexpr double kInputTolerance = 1e-9;

void require_stochastic(const Matrix& a, const char* what) {
  if (!is_row_stochastic(a, kInputTolerance)) {
    throw std::invalid_argument(std::string(what) + ": matrix is not row-stochastic");
  }
}

using Pattern = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

Pattern positive_pattern(const Matrix& a) { return (a.array() > 0.0).matrix(); }

// Boolean product: reachability in exactly one more step.
Pattern pattern_product(const Pattern& a, const Pattern& b) {
  const Eigen::Index n = a.rows();
  Pattern out = Pattern::Constant(n, b.cols(), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      if (!a(i, k)) continue;
      for (Eigen::Index j = 0; j < b.cols(); ++j) out(i, j) = out(i, j) || b(k, j);
    }
  }
  return out;
}

struct BlockSummary {
  bool scrambling = false;
  double lambda = 0.0;
  std::vector<std::uint8_t> positive_column;  // per node
};

BlockSummary summarize(const Matrix& w, int node_count) {
  BlockSummary s;
  for (Eigen::Index i = 0; i < node_count; ++i) {
    s.positive_column.push_back((w.col(i).array() > 0.0).all() ? 1 : 0);
  }
  s.scrambling = is_scrambling(w);
  if (s.scrambling) s.lambda = lambda(w);
  return s;
}

struct BlockAccumulator {
  double scrambling_weight = 0.0;
  double d = 0.0;
  std::size_t scrambling = 0;
  std::vector<double> gamma_weight;

  explicit BlockAccumulator(int node_count) : gamma_weight(node_count, 0.0) {}

  void add(const BlockSummary& s, double weight) {
    for (std::size_t i = 0; i < gamma_weight.size(); ++i) {
      if (s.positive_column[i]) gamma_weight[i] += weight;
    }
    if (!s.scrambling) return;
    scrambling_weight += weight;
    ++scrambling;
    d = std::max(d, s.lambda);
  }
};

}  // namespace

double delta(const Matrix& a) {
  require_stochastic(a, "delta");
  return (a.colwise().maxCoeff() - a.colwise().minCoeff()).maxCoeff();
}

double lambda(const Matrix& a) {
  require_stochastic(a, "lambda");
  const Eigen::Index n = a.rows();
  double min_overlap = 1.0;
  for (Eigen::Index r1 = 0; r1 < n; ++r1) {
    for (Eigen::Index r2 = r1 + 1; r2 < n; ++r2) {
      min_overlap = std::min(min_overlap, a.row(r1).cwiseMin(a.row(r2)).sum());
    }
  }
  return std::clamp(1.0 - min_overlap, 0.0, 1.0);
}

bool is_scrambling(const Matrix& a) {
  const Eigen::Index n = a.rows();
  const Pattern p = positive_pattern(a);
  for (Eigen::Index r1 = 0; r1 < n; ++r1) {
    for (Eigen::Index r2 = r1 + 1; r2 < n; ++r2) {
      if (!(p.row(r1).array() && p.row(r2).array()).any()) return false;
    }
  }
  return true;
}

bool is_scrambling_by_lambda(const Matrix& a) { return lambda(a) < 1.0; }

HajnalBound hajnal_bound_check(std::span<const Matrix> factors) {
  if (factors.empty()) throw std::invalid_argument("hajnal_bound_check needs at least one factor");
  const Eigen::Index n = factors.front().rows();
  Matrix product = Matrix::Identity(n, n);
  double lambda_prefix = 1.0;
  HajnalBound bound;
  for (std::size_t p = 0; p < factors.size(); ++p) {
    const Matrix& a = factors[p];
    if (a.rows() != n || a.cols() != n) {
      throw std::invalid_argument("factor " + std::to_string(p) + " has mismatched dimensions");
    }
    product = product * a;
    const double lam = lambda(a);
    if (p + 1 == factors.size()) {
      bound.middle = lambda_prefix * delta(a);
      bound.rhs = lambda_prefix * lam;
    }
    lambda_prefix *= lam;
  }
  bound.lhs = delta(product);
  return bound;
}

double derive_c(const Graph& graph) {
  int max_degree = 1;
  for (NodeId i = 0; i < graph.node_count(); ++i) max_degree = std::max(max_degree, graph.out_degree(i));
  return 1.0 / max_degree;
}

int derive_l(const Graph& graph) {
  const Pattern base = positive_pattern(ideal_matrix(graph));
  Pattern power = base;
  const int limit = graph.node_count() * graph.node_count() + 1;
  for (int p = 1; p <= limit; ++p) {
    if (power.all()) return p;
    power = pattern_product(power, base);
  }
  throw std::logic_error("node matrix is not primitive; graph validation should prevent this");
}

int derive_block_length(const Graph& graph) {
  const int m = graph.node_count();
  const Pattern base =
      positive_pattern(build_matrix(graph, DropMask::all_reliable(graph, 1)).values());
  Pattern power = base;
  const int limit = 2 * static_cast<int>(base.rows()) + 1;
  for (int p = 1; p <= limit; ++p) {
    if (power.leftCols(m).all()) return p;
    power = pattern_product(power, base);
  }
  throw std::logic_error("augmented matrix never reaches positive node columns");
}

double BlockStatistics::w_stderr() const {
  if (exact || samples == 0) return 0.0;
  return std::sqrt(w * (1.0 - w) / static_cast<double>(samples));
}

BlockStatistics enumerate_w_d(const Graph& graph, int block_length) {
  if (block_length < 1) throw std::invalid_argument("block length must be positive");
  const int links = graph.link_count();
  const int bits = links * block_length;
  if (bits > kMaxEnumerationBits) {
    throw std::invalid_argument("exact enumeration needs links * block length <= " +
                                std::to_string(kMaxEnumerationBits) + ", got " +
                                std::to_string(bits));
  }
  const int n = AugmentedSpace(graph).size();
  BlockAccumulator acc(graph.node_count());
  for (std::uint32_t pattern = 0; pattern < (1u << bits); ++pattern) {
    double weight = 1.0;
    Matrix w = Matrix::Identity(n, n);
    for (int step = 0; step < block_length; ++step) {
      DropMask mask{step + 1, std::vector<std::uint8_t>(links)};
      for (int e = 0; e < links; ++e) {
        const bool up = (pattern >> (step * links + e)) & 1u;
        mask.reliable[e] = up ? 1 : 0;
        const double q = graph.links()[e].q;
        weight *= up ? q : 1.0 - q;
      }
      if (weight == 0.0) break;
      w = w * build_matrix(graph, mask).values();
    }
    if (weight == 0.0) continue;
    acc.add(summarize(w, graph.node_count()), weight);
  }

  BlockStatistics stats;
  stats.block_length = block_length;
  stats.exact = true;
  stats.w = acc.scrambling_weight;
  stats.d = acc.d;
  stats.gamma = acc.gamma_weight;
  stats.scrambling = acc.scrambling;
  return stats;
}

BlockStatistics estimate_w_d(const Graph& graph, int block_length, std::size_t samples,
                             std::uint64_t seed, unsigned threads) {
  if (block_length < 1) throw std::invalid_argument("block length must be positive");
  if (samples < 1) throw std::invalid_argument("estimate_w_d needs at least one sample");
  const int n = AugmentedSpace(graph).size();

  const auto summaries = parallel_map(samples, threads, [&](std::size_t s) {
    LinkRng rng(seed, s);
    Matrix w = Matrix::Identity(n, n);
    for (int step = 1; step <= block_length; ++step) {
      w = w * build_matrix(graph, draw_mask(graph, rng, step)).values();
    }
    return summarize(w, graph.node_count());
  });

  BlockAccumulator acc(graph.node_count());
  for (const BlockSummary& summary : summaries) acc.add(summary, 1.0);

  BlockStatistics stats;
  stats.block_length = block_length;
  stats.samples = samples;
  stats.scrambling = acc.scrambling;
  stats.w = static_cast<double>(acc.scrambling) / static_cast<double>(samples);
  stats.d = acc.d;
  for (double g : acc.gamma_weight) stats.gamma.push_back(g / static_cast<double>(samples));
  return stats;
}

ErgodicityConstants derive_constants(const Graph& graph, const BlockStatistics& stats) {
  ErgodicityConstants k;
  k.c = derive_c(graph);
  k.l = derive_l(graph);
  k.block_length = stats.block_length;
  k.w = stats.w;
  k.d = stats.d;
  k.defined = stats.w > 0.0 && stats.d < 1.0;
  if (!k.defined) return k;
  const double len = stats.block_length;
  k.alpha = std::exp(-stats.w / (16.0 * len));
  k.beta = std::pow(stats.d, stats.w / (8.0 * len));
  k.k_threshold = static_cast<int>(std::ceil(8.0 * len / stats.w));
  return k;
}

ErgodicityTrace trace_ergodicity(const Graph& graph, std::span<const DropMask> masks,
                                 int block_length) {
  ProductState state(AugmentedSpace(graph).size(), block_length);
  ErgodicityTrace out;
  out.delta.reserve(masks.size());
  for (const DropMask& mask : masks) {
    if (auto block = state.accumulate(build_matrix(graph, mask))) {
      const int index = static_cast<int>(out.blocks.size()) + 1;
      out.blocks.push_back({index, lambda(*block), is_scrambling(*block)});
    }
    out.delta.push_back(delta(state.product()));
  }
  return out;
}

std::vector<Certification> certify_convergence(std::span<const double> delta_trace,
                                               const ErgodicityConstants& constants) {
  if (!constants.defined) {
    throw std::invalid_argument("certification needs defined alpha, beta and threshold");
  }
  std::vector<Certification> out;
  out.reserve(delta_trace.size());
  for (std::size_t idx = 0; idx < delta_trace.size(); ++idx) {
    Certification c;
    c.k = static_cast<int>(idx) + 1;
    c.delta = delta_trace[idx];
    c.beta_pow = std::pow(constants.beta, c.k);
    c.in_domain = c.k >= constants.k_threshold;
    c.certified = c.in_domain && c.delta <= c.beta_pow;
    out.push_back(c);
  }
  return out;
}

}  // namespace rrc
