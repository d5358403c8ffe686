#include "rrc/simulator.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "rrc/format.hpp"

namespace rrc {
namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream),
                       static_cast<std::uint32_t>(stream >> 32)};
}

void check_mask(const Graph& graph, const DropMask& mask, int round) {
  if (mask.round != round) {
    throw ConfigError("mask for round " + std::to_string(mask.round) + " supplied at round " +
                      std::to_string(round));
  }
  if (mask.reliable.size() != static_cast<std::size_t>(graph.link_count())) {
    throw ConfigError("mask for round " + std::to_string(round) + " has " +
                      std::to_string(mask.reliable.size()) + " entries, graph has " +
                      std::to_string(graph.link_count()) + " links");
  }
}

RoundRecord snapshot(const Graph& graph, const std::vector<NodeState>& states, DropMask mask,
                     const std::vector<std::uint8_t>& gated) {
  RoundRecord rec;
  rec.round = mask.round;
  rec.mask = std::move(mask);
  rec.gated = gated;
  for (const NodeState& s : states) {
    rec.y.push_back(s.y);
    rec.z.push_back(s.z);
    rec.estimate.push_back(s.estimate);
  }
  for (const Link& link : graph.links()) {
    const NodeState& receiver = states[link.to];
    const NodeState& sender = states[link.from];
    rec.buffer_y.push_back(receiver.backlog_y(sender));
    rec.buffer_z.push_back(receiver.backlog_z(sender));
  }
  return rec;
}

// Two-phase round: every broadcast is formed from round k-1 state before any
// delivery is applied.
void robust_round(const Graph& graph, std::vector<NodeState>& states, const DropMask& mask) {
  std::vector<Broadcast> outbox;
  outbox.reserve(states.size());
  for (NodeState& s : states) outbox.push_back(robust_broadcast(s, graph));

  for (NodeId i = 0; i < graph.node_count(); ++i) {
    Deliveries inbox;
    inbox.emplace(i, outbox[i]);
    for (int e : graph.in_links(i)) {
      if (mask.is_reliable(e)) inbox.emplace(graph.links()[e].from, outbox[graph.links()[e].from]);
    }
    states[i] = robust_receive(std::move(states[i]), inbox);
  }
}

Trace execute(const RunConfig& config, std::span<const DropMask> masks) {
  const Graph& graph = config.graph;
  std::vector<NodeState> states = initial_states(graph, config.init);

  Trace trace;
  trace.rounds.reserve(config.steps + 1);
  trace.rounds.push_back(snapshot(graph, states, DropMask{0, {}},
                                  std::vector<std::uint8_t>(graph.node_count(), 0)));

  std::vector<std::uint8_t> gated(graph.node_count());
  for (int k = 1; k <= config.steps; ++k) {
    const DropMask& mask = masks[k - 1];
    if (config.mode == Mode::ideal) {
      states = ideal_step(states, graph);
    } else {
      robust_round(graph, states, mask);
    }
    for (NodeState& s : states) {
      gated[s.id] = compute_estimate(s, config.gating, k).has_value() ? 1 : 0;
    }
    trace.rounds.push_back(snapshot(graph, states, mask, gated));
  }

  for (NodeState& s : states) trace.update_times.push_back(std::move(s.update_times));
  return trace;
}

}  // namespace

DropMask DropMask::all_reliable(const Graph& graph, int round) {
  return {round, std::vector<std::uint8_t>(graph.link_count(), 1)};
}

DropMask DropMask::all_dropped(const Graph& graph, int round) {
  return {round, std::vector<std::uint8_t>(graph.link_count(), 0)};
}

LinkRng::LinkRng(std::uint64_t seed, std::uint64_t stream) {
  auto seq = make_seed_seq(seed, stream);
  engine_.seed(seq);
}

double LinkRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

DropMask draw_mask(const Graph& graph, LinkRng& rng, int round) {
  DropMask mask{round, {}};
  mask.reliable.reserve(graph.link_count());
  for (const Link& link : graph.links()) {
    mask.reliable.push_back(rng.uniform() < link.q ? 1 : 0);
  }
  return mask;
}

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  init.validate(graph.node_count(), gating.mode == GatingPolicy::Mode::positive);
  gating.validate(graph.node_count());
}

std::vector<DropMask> draw_masks(const RunConfig& config) {
  std::vector<DropMask> masks;
  masks.reserve(config.steps);
  if (config.mode == Mode::ideal) {
    for (int k = 1; k <= config.steps; ++k) masks.push_back(DropMask::all_reliable(config.graph, k));
    return masks;
  }
  LinkRng rng(config.seed, config.stream);
  for (int k = 1; k <= config.steps; ++k) masks.push_back(draw_mask(config.graph, rng, k));
  return masks;
}

Trace run(const RunConfig& config) {
  config.validate();
  const auto masks = draw_masks(config);
  return execute(config, masks);
}

Trace replay(const RunConfig& config, std::span<const DropMask> masks) {
  config.validate();
  if (masks.size() != static_cast<std::size_t>(config.steps)) {
    throw ConfigError("replay needs " + std::to_string(config.steps) + " masks, got " +
                      std::to_string(masks.size()));
  }
  for (int k = 1; k <= config.steps; ++k) check_mask(config.graph, masks[k - 1], k);
  return execute(config, masks);
}

std::vector<double> Trace::augmented_y(int k) const {
  const RoundRecord& r = rounds.at(k);
  std::vector<double> v = r.y;
  v.insert(v.end(), r.buffer_y.begin(), r.buffer_y.end());
  return v;
}

std::vector<double> Trace::augmented_z(int k) const {
  const RoundRecord& r = rounds.at(k);
  std::vector<double> v = r.z;
  v.insert(v.end(), r.buffer_z.begin(), r.buffer_z.end());
  return v;
}

std::vector<DropMask> Trace::masks() const {
  std::vector<DropMask> out;
  for (std::size_t k = 1; k < rounds.size(); ++k) out.push_back(rounds[k].mask);
  return out;
}

double Trace::final_error(double target) const {
  double worst = 0.0;
  for (const auto& estimate : rounds.back().estimate) {
    if (!estimate) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(*estimate - target));
  }
  return worst;
}

void write_trace_csv(std::ostream& out, const Trace& trace, const Graph& graph) {
  const AugmentedSpace space(graph);
  out << "k,entity,kind,y,z,estimate,gated\n";
  for (const RoundRecord& r : trace.rounds) {
    for (int idx = 0; idx < space.size(); ++idx) {
      out << r.round << ',' << space.label(idx) << ',';
      if (idx < space.node_count()) {
        out << "node," << format_real(r.y[idx]) << ',' << format_real(r.z[idx]) << ',';
        if (r.estimate[idx]) out << format_real(*r.estimate[idx]);
        out << ',' << static_cast<int>(r.gated[idx]) << '\n';
      } else {
        const int link = idx - space.node_count();
        out << "buffer," << format_real(r.buffer_y[link]) << ','
            << format_real(r.buffer_z[link]) << ",,\n";
      }
    }
  }
}

void write_mask_csv(std::ostream& out, std::span<const DropMask> masks, const Graph& graph) {
  out << "k,from,to,reliable\n";
  for (const DropMask& mask : masks) {
    for (int e = 0; e < graph.link_count(); ++e) {
      const Link& link = graph.links()[e];
      out << mask.round << ',' << link.from + 1 << ',' << link.to + 1 << ','
          << static_cast<int>(mask.reliable[e]) << '\n';
    }
  }
}

}  // namespace rrc
