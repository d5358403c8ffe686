#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rrc/graph.hpp"

namespace rrc {

/// Raised when a node is handed a message it could never have received.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for invalid initial conditions, gating policies or run settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Monotone running total kept as an unevaluated sum hi + lo.
///
/// Broadcast totals grow roughly linearly with the round count while the
/// per-round increments stay O(1); a plain double would lose the low bits of
/// every increment and leak mass. The compensated pair keeps differences of
/// two totals accurate to the size of the difference.
class Cumulative {
 public:
  Cumulative() = default;
  explicit Cumulative(double value) : hi_(value) {}

  Cumulative& operator+=(double x) noexcept {
    const double s = hi_ + x;
    const double bp = s - hi_;
    const double err = (hi_ - (s - bp)) + (x - bp);
    const double lo = lo_ + err;
    hi_ = s + lo;
    lo_ = lo - (hi_ - s);
    return *this;
  }

  double value() const noexcept { return hi_ + lo_; }

  /// a - b evaluated without cancelling the low parts.
  friend double operator-(const Cumulative& a, const Cumulative& b) noexcept {
    return (a.hi_ - b.hi_) + (a.lo_ - b.lo_);
  }

  friend bool operator==(const Cumulative&, const Cumulative&) = default;

 private:
  double hi_ = 0.0;
  double lo_ = 0.0;
};

/// The single payload a node broadcasts each round: its cumulative totals.
struct Broadcast {
  Cumulative sigma_y;
  Cumulative sigma_z;
};

/// Per-node protocol variables.
struct NodeState {
  NodeId id = 0;
  double y = 0.0;
  double z = 0.0;
  Cumulative sigma_y;
  Cumulative sigma_z;
  /// Senders this node listens to (itself included), ascending; rho_y/rho_z
  /// are aligned with it.
  std::vector<NodeId> senders;
  std::vector<Cumulative> rho_y;
  std::vector<Cumulative> rho_z;
  std::optional<double> estimate;
  std::vector<int> update_times;

  /// Position of `sender` in `senders`, or nullopt when not an in-neighbor.
  std::optional<std::size_t> slot_of(NodeId sender) const;

  /// Undelivered mass on the link from `sender` to this node (sigma - rho).
  double backlog_y(const NodeState& sender) const;
  double backlog_z(const NodeState& sender) const;
};

/// y0/z0 per node. A weighted average of values v with weights w is encoded
/// as y0 = w * v, z0 = w.
struct InitialConditions {
  std::vector<double> y0;
  std::vector<double> z0;

  /// Throws ConfigError on size mismatch, negative or non-finite entries, or
  /// a zero z-total. Negative y0 is tolerated when `allow_negative_y`.
  void validate(int node_count, bool allow_negative_y = false) const;

  double y_total() const;
  double z_total() const;
  double target() const { return y_total() / z_total(); }
};

/// Decides when a node may refresh its ratio estimate.
struct GatingPolicy {
  enum class Mode { threshold, positive };

  Mode mode = Mode::positive;
  std::vector<double> mu;  // per node, threshold mode only

  static GatingPolicy positive() { return {Mode::positive, {}}; }
  static GatingPolicy threshold(std::vector<double> mu) {
    return {Mode::threshold, std::move(mu)};
  }

  void validate(int node_count) const;
};

std::vector<NodeState> initial_states(const Graph& graph, const InitialConditions& init);

/// One round of the loss-free iteration: every node's new y and z are the
/// sums of the shares y/D and z/D of its in-neighbors. Only y and z change.
std::vector<NodeState> ideal_step(std::span<const NodeState> states, const Graph& graph);

/// Adds the node's per-round share y/D, z/D to its cumulative totals and
/// returns the message broadcast to every out-neighbor.
Broadcast robust_broadcast(NodeState& state, const Graph& graph);

/// Messages that reached one node in a round, keyed by sender id.
using Deliveries = std::map<NodeId, Broadcast>;

/// Absorbs the round's deliveries: rho jumps to the delivered totals, absent
/// senders keep their old rho, and the new mass is the sum of the rho
/// increments. The node's own broadcast must be among the deliveries.
NodeState robust_receive(NodeState state, const Deliveries& deliveries);

/// Refreshes the ratio estimate when the gate is open at round k and records
/// k in update_times. Returns the new estimate, or nullopt when the gate is
/// closed (the previous estimate is kept).
std::optional<double> compute_estimate(NodeState& state, const GatingPolicy& policy, int k);

/// Gate threshold z0[i] * c^l / n for node i, with n the augmented size.
/// Throws ConfigError when z0[i] is not positive.
double mu_for_node(const Graph& graph, std::span<const double> z0, NodeId i, double c, int l);

/// Same bound with an explicitly supplied lower bound on sum(z0).
double mu_from_bound(const Graph& graph, double z_lower_bound, double c, int l);

}  // namespace rrc
