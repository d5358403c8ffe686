#include "rrc/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

namespace rrc {
namespace {

std::string edge_name(NodeId from, NodeId to) {
  return "(" + std::to_string(from + 1) + "," + std::to_string(to + 1) + ")";
}

// Marks every node reachable from node 0 following `adjacency`.
std::vector<bool> reach_from_first(const std::vector<std::vector<NodeId>>& adjacency) {
  std::vector<bool> seen(adjacency.size(), false);
  std::vector<NodeId> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : adjacency[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

Graph Graph::create(int node_count, std::vector<Link> links) {
  if (node_count < 1) {
    throw GraphError(GraphErrc::invalid_node_count,
                     "node count must be positive, got " + std::to_string(node_count));
  }

  Graph g;
  g.node_count_ = node_count;

  std::vector<bool> self_listed(node_count, false);
  for (const Link& link : links) {
    if (link.from < 0 || link.from >= node_count || link.to < 0 || link.to >= node_count) {
      throw GraphError(GraphErrc::unknown_node,
                       "edge " + edge_name(link.from, link.to) + " references an unknown node");
    }
    if (link.from == link.to) {
      if (self_listed[link.from]) {
        throw GraphError(GraphErrc::duplicate_edge,
                         "duplicate edge " + edge_name(link.from, link.to));
      }
      self_listed[link.from] = true;
      if (link.q != 1.0) {
        throw GraphError(GraphErrc::invalid_reliability,
                         "self-loop " + edge_name(link.from, link.to) + " must have q = 1");
      }
      continue;
    }
    if (!(link.q > 0.0 && link.q <= 1.0)) {
      throw GraphError(GraphErrc::invalid_reliability,
                       "edge " + edge_name(link.from, link.to) + " has q outside (0,1]");
    }
    g.links_.push_back(link);
  }

  std::sort(g.links_.begin(), g.links_.end(), [](const Link& a, const Link& b) {
    return std::pair(a.from, a.to) < std::pair(b.from, b.to);
  });
  const auto dup = std::adjacent_find(g.links_.begin(), g.links_.end(),
                                      [](const Link& a, const Link& b) {
                                        return a.from == b.from && a.to == b.to;
                                      });
  if (dup != g.links_.end()) {
    throw GraphError(GraphErrc::duplicate_edge, "duplicate edge " + edge_name(dup->from, dup->to));
  }

  g.out_links_.resize(node_count);
  g.in_links_.resize(node_count);
  g.in_neighbors_.resize(node_count);
  std::vector<std::vector<NodeId>> forward(node_count), reverse(node_count);
  for (int e = 0; e < g.link_count(); ++e) {
    const Link& link = g.links_[e];
    g.out_links_[link.from].push_back(e);
    g.in_links_[link.to].push_back(e);
    forward[link.from].push_back(link.to);
    reverse[link.to].push_back(link.from);
  }
  for (NodeId i = 0; i < node_count; ++i) {
    auto& senders = g.in_neighbors_[i];
    senders.push_back(i);
    for (int e : g.in_links_[i]) senders.push_back(g.links_[e].from);
    std::sort(senders.begin(), senders.end());
  }

  const auto fwd = reach_from_first(forward);
  const auto rev = reach_from_first(reverse);
  for (NodeId i = 0; i < node_count; ++i) {
    if (!fwd[i] || !rev[i]) {
      throw GraphError(GraphErrc::not_strongly_connected,
                       "graph is not strongly connected (node " + std::to_string(i + 1) +
                           (fwd[i] ? " cannot reach node 1)" : " is unreachable from node 1)"));
    }
  }
  return g;
}

void Graph::check_node(NodeId i) const {
  if (i < 0 || i >= node_count_) {
    throw GraphError(GraphErrc::unknown_node, "unknown node id " + std::to_string(i + 1));
  }
}

int Graph::out_degree(NodeId i) const {
  check_node(i);
  return 1 + static_cast<int>(out_links_[i].size());
}

std::span<const int> Graph::out_links(NodeId i) const {
  check_node(i);
  return out_links_[i];
}

std::span<const int> Graph::in_links(NodeId i) const {
  check_node(i);
  return in_links_[i];
}

std::span<const NodeId> Graph::in_neighbors(NodeId i) const {
  check_node(i);
  return in_neighbors_[i];
}

std::optional<int> Graph::link_index(NodeId from, NodeId to) const {
  const auto it = std::lower_bound(links_.begin(), links_.end(), std::pair(from, to),
                                   [](const Link& l, const std::pair<NodeId, NodeId>& key) {
                                     return std::pair(l.from, l.to) < key;
                                   });
  if (it == links_.end() || it->from != from || it->to != to) return std::nullopt;
  return static_cast<int>(it - links_.begin());
}

Graph Graph::with_uniform_reliability(double q) const {
  std::vector<Link> links = links_;
  for (Link& link : links) link.q = q;
  return create(node_count_, std::move(links));
}

std::string Graph::to_json() const {
  nlohmann::ordered_json doc;
  doc["m"] = node_count_;
  doc["edges"] = nlohmann::ordered_json::array();
  for (const Link& link : links_) {
    doc["edges"].push_back({{"from", link.from + 1}, {"to", link.to + 1}, {"q", link.q}});
  }
  return doc.dump();
}

std::uint64_t Graph::fingerprint() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json()) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Graph load_graph(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphError(GraphErrc::parse, std::string("malformed graph document: ") + e.what());
  }

  int m = 0;
  std::vector<Link> links;
  try {
    if (!doc.is_object() || !doc.contains("m") || !doc.contains("edges")) {
      throw GraphError(GraphErrc::parse, "graph document needs fields 'm' and 'edges'");
    }
    if (!doc["m"].is_number_integer()) {
      throw GraphError(GraphErrc::parse, "'m' must be an integer");
    }
    m = doc["m"].get<int>();
    if (!doc["edges"].is_array()) {
      throw GraphError(GraphErrc::parse, "'edges' must be an array");
    }
    for (const auto& edge : doc["edges"]) {
      if (!edge.is_object() || !edge.contains("from") || !edge.contains("to") ||
          !edge.contains("q") || !edge["from"].is_number_integer() ||
          !edge["to"].is_number_integer() || !edge["q"].is_number()) {
        throw GraphError(GraphErrc::parse,
                         "each edge needs integer 'from'/'to' and numeric 'q': " + edge.dump());
      }
      links.push_back({edge["from"].get<int>() - 1, edge["to"].get<int>() - 1,
                       edge["q"].get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(GraphErrc::parse, std::string("malformed graph document: ") + e.what());
  }
  return Graph::create(m, std::move(links));
}

Graph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::system_error(std::make_error_code(std::errc::no_such_file_or_directory),
                            "cannot read graph file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_graph(buffer.str());
}

AugmentedSpace::AugmentedSpace(const Graph& graph)
    : node_count_(graph.node_count()),
      link_count_(graph.link_count()),
      links_(graph.links().begin(), graph.links().end()) {}

AugmentedEntity AugmentedSpace::entity(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("augmented index " + std::to_string(index) + " out of range");
  }
  if (index < node_count_) return {AugmentedEntity::Kind::node, index, -1};
  return {AugmentedEntity::Kind::buffer, 0, index - node_count_};
}

int AugmentedSpace::index_of(const AugmentedEntity& entity) const {
  if (entity.kind == AugmentedEntity::Kind::node) {
    if (entity.node < 0 || entity.node >= node_count_) {
      throw std::out_of_range("node " + std::to_string(entity.node) + " out of range");
    }
    return entity.node;
  }
  if (entity.link < 0 || entity.link >= link_count_) {
    throw std::out_of_range("link " + std::to_string(entity.link) + " out of range");
  }
  return node_count_ + entity.link;
}

std::string AugmentedSpace::label(int index) const {
  const AugmentedEntity e = entity(index);
  if (e.kind == AugmentedEntity::Kind::node) return std::to_string(e.node + 1);
  const Link& link = links_[e.link];
  return std::to_string(link.from + 1) + "-" + std::to_string(link.to + 1);
}

}  // namespace rrc
