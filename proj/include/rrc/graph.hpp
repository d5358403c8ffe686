#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rrc {

/// Zero-based node id. External formats are one-based; conversion happens
/// only when reading or writing documents.
using NodeId = int;

/// A directed link (from, to) whose transmissions succeed independently with
/// probability q per round.
struct Link {
  NodeId from = 0;
  NodeId to = 0;
  double q = 1.0;

  friend bool operator==(const Link&, const Link&) = default;
};

enum class GraphErrc {
  parse,
  invalid_node_count,
  unknown_node,
  duplicate_edge,
  invalid_reliability,
  not_strongly_connected,
};

class GraphError : public std::runtime_error {
 public:
  GraphError(GraphErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  GraphErrc code() const noexcept { return code_; }

 private:
  GraphErrc code_;
};

/// Directed, strongly connected communication graph. Every node carries an
/// implicit, always-reliable self-loop; only the other links are stored and
/// they are kept in lexicographic (from, to) order.
///
/// Instances are immutable once created.
class Graph {
 public:
  /// Validates and builds a graph. `links` may list self-loops, which must
  /// carry q == 1 and are otherwise dropped.
  static Graph create(int node_count, std::vector<Link> links);

  int node_count() const noexcept { return node_count_; }

  /// Non-self-loop links in canonical order.
  std::span<const Link> links() const noexcept { return links_; }
  int link_count() const noexcept { return static_cast<int>(links_.size()); }

  /// Number of edges counting one self-loop per node.
  int edge_count() const noexcept { return node_count_ + link_count(); }

  /// |O_i|, counting the self-loop.
  int out_degree(NodeId i) const;

  /// Link indices leaving / entering node i (self-loop excluded).
  std::span<const int> out_links(NodeId i) const;
  std::span<const int> in_links(NodeId i) const;

  /// Senders whose broadcasts node i can hear, itself included, ascending.
  std::span<const NodeId> in_neighbors(NodeId i) const;

  std::optional<int> link_index(NodeId from, NodeId to) const;

  /// Copy with every link's reliability replaced by q.
  Graph with_uniform_reliability(double q) const;

  /// Canonical one-based JSON rendering; stable across runs.
  std::string to_json() const;

  /// FNV-1a hash of to_json(), used to tag output files.
  std::uint64_t fingerprint() const;

 private:
  Graph() = default;
  void check_node(NodeId i) const;

  int node_count_ = 0;
  std::vector<Link> links_;
  std::vector<std::vector<int>> out_links_;
  std::vector<std::vector<int>> in_links_;
  std::vector<std::vector<NodeId>> in_neighbors_;
};

/// Parses the graph document `{"m": int, "edges": [{"from","to","q"}...]}`.
Graph load_graph(std::string_view document);

/// Reads and parses a graph document. Unreadable files raise
/// std::system_error so callers can tell I/O failures from validation ones.
Graph load_graph_file(const std::filesystem::path& path);

/// One entry of the augmented state space: a computing node or the virtual
/// buffer of a link.
struct AugmentedEntity {
  enum class Kind { node, buffer };

  Kind kind = Kind::node;
  NodeId node = 0;  // valid when kind == node
  int link = -1;    // valid when kind == buffer

  friend bool operator==(const AugmentedEntity&, const AugmentedEntity&) = default;
};

/// Canonical index space: positions [0, m) are nodes by id, positions
/// [m, n) are link buffers in canonical link order.
class AugmentedSpace {
 public:
  explicit AugmentedSpace(const Graph& graph);

  int size() const noexcept { return node_count_ + link_count_; }
  int node_count() const noexcept { return node_count_; }

  AugmentedEntity entity(int index) const;
  int index_of(const AugmentedEntity& entity) const;

  int node_index(NodeId i) const { return index_of({AugmentedEntity::Kind::node, i, -1}); }
  int buffer_index(int link) const {
    return index_of({AugmentedEntity::Kind::buffer, 0, link});
  }

  /// "3" for node 3, "1-2" for the buffer on link (1,2); one-based.
  std::string label(int index) const;

 private:
  int node_count_;
  int link_count_;
  std::vector<Link> links_;
};

}  // namespace rrc
