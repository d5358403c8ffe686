#include "rrc/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace rrc {

std::optional<std::size_t> NodeState::slot_of(NodeId sender) const {
  const auto it = std::lower_bound(senders.begin(), senders.end(), sender);
  if (it == senders.end() || *it != sender) return std::nullopt;
  return static_cast<std::size_t>(it - senders.begin());
}

double NodeState::backlog_y(const NodeState& sender) const {
  const auto slot = slot_of(sender.id);
  if (!slot) throw ProtocolError("node " + std::to_string(sender.id + 1) + " is not an in-neighbor");
  return sender.sigma_y - rho_y[*slot];
}

double NodeState::backlog_z(const NodeState& sender) const {
  const auto slot = slot_of(sender.id);
  if (!slot) throw ProtocolError("node " + std::to_string(sender.id + 1) + " is not an in-neighbor");
  return sender.sigma_z - rho_z[*slot];
}

void InitialConditions::validate(int node_count, bool allow_negative_y) const {
  const auto m = static_cast<std::size_t>(node_count);
  if (y0.size() != m) {
    throw ConfigError("y0 has " + std::to_string(y0.size()) + " entries, graph has " +
                      std::to_string(m) + " nodes");
  }
  if (z0.size() != m) {
    throw ConfigError("z0 has " + std::to_string(z0.size()) + " entries, graph has " +
                      std::to_string(m) + " nodes");
  }
  for (double v : y0) {
    if (!std::isfinite(v)) throw ConfigError("y0 entries must be finite");
    if (v < 0.0 && !allow_negative_y) throw ConfigError("y0 entries must be non-negative");
  }
  for (double v : z0) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("z0 entries must be finite and non-negative");
  }
  if (!(z_total() > 0.0)) throw ConfigError("sum of z0 must be positive");
}

double InitialConditions::y_total() const { return std::accumulate(y0.begin(), y0.end(), 0.0); }
double InitialConditions::z_total() const { return std::accumulate(z0.begin(), z0.end(), 0.0); }

void GatingPolicy::validate(int node_count) const {
  if (mode == Mode::positive) return;
  if (mu.size() != static_cast<std::size_t>(node_count)) {
    throw ConfigError("threshold gating needs one mu per node");
  }
  for (double v : mu) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("threshold gating needs mu > 0");
  }
}

std::vector<NodeState> initial_states(const Graph& graph, const InitialConditions& init) {
  std::vector<NodeState> states(graph.node_count());
  for (NodeId i = 0; i < graph.node_count(); ++i) {
    NodeState& s = states[i];
    s.id = i;
    s.y = init.y0.at(i);
    s.z = init.z0.at(i);
    const auto senders = graph.in_neighbors(i);
    s.senders.assign(senders.begin(), senders.end());
    s.rho_y.assign(s.senders.size(), Cumulative{});
    s.rho_z.assign(s.senders.size(), Cumulative{});
  }
  return states;
}

std::vector<NodeState> ideal_step(std::span<const NodeState> states, const Graph& graph) {
  std::vector<NodeState> next(states.begin(), states.end());
  for (NodeId i = 0; i < graph.node_count(); ++i) {
    double y = 0.0;
    double z = 0.0;
    for (NodeId j : graph.in_neighbors(i)) {
      const double degree = graph.out_degree(j);
      y += states[j].y / degree;
      z += states[j].z / degree;
    }
    next[i].y = y;
    next[i].z = z;
  }
  return next;
}

Broadcast robust_broadcast(NodeState& state, const Graph& graph) {
  const double degree = graph.out_degree(state.id);
  state.sigma_y += state.y / degree;
  state.sigma_z += state.z / degree;
  return {state.sigma_y, state.sigma_z};
}

NodeState robust_receive(NodeState state, const Deliveries& deliveries) {
  if (!deliveries.contains(state.id)) {
    throw ProtocolError("node " + std::to_string(state.id + 1) + " is missing its own broadcast");
  }
  for (const auto& [sender, message] : deliveries) {
    if (!state.slot_of(sender)) {
      throw ProtocolError("node " + std::to_string(state.id + 1) + " received a message from " +
                          std::to_string(sender + 1) + ", which is not an in-neighbor");
    }
  }

  double y = 0.0;
  double z = 0.0;
  for (std::size_t slot = 0; slot < state.senders.size(); ++slot) {
    const auto it = deliveries.find(state.senders[slot]);
    if (it == deliveries.end()) continue;
    y += it->second.sigma_y - state.rho_y[slot];
    z += it->second.sigma_z - state.rho_z[slot];
    state.rho_y[slot] = it->second.sigma_y;
    state.rho_z[slot] = it->second.sigma_z;
  }
  state.y = y;
  state.z = z;
  return state;
}

std::optional<double> compute_estimate(NodeState& state, const GatingPolicy& policy, int k) {
  const bool open = policy.mode == GatingPolicy::Mode::positive
                        ? state.z > 0.0
                        : state.z >= policy.mu.at(state.id);
  if (!open) return std::nullopt;
  state.estimate = state.y / state.z;
  state.update_times.push_back(k);
  return state.estimate;
}

double mu_from_bound(const Graph& graph, double z_lower_bound, double c, int l) {
  if (!(z_lower_bound > 0.0)) throw ConfigError("lower bound on sum(z0) must be positive");
  if (!(c > 0.0 && c <= 1.0)) throw ConfigError("c must lie in (0,1]");
  if (l < 1) throw ConfigError("l must be at least 1");
  const double n = AugmentedSpace(graph).size();
  return z_lower_bound * std::pow(c, l) / n;
}

double mu_for_node(const Graph& graph, std::span<const double> z0, NodeId i, double c, int l) {
  if (i < 0 || i >= graph.node_count() || static_cast<std::size_t>(i) >= z0.size()) {
    throw GraphError(GraphErrc::unknown_node, "unknown node id " + std::to_string(i + 1));
  }
  if (!(z0[i] > 0.0)) {
    throw ConfigError("node " + std::to_string(i + 1) +
                      " has z0 = 0 and cannot bound sum(z0); supply the bound explicitly");
  }
  return mu_from_bound(graph, z0[i], c, l);
}

}  // namespace rrc
