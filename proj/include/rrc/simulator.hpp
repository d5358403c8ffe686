#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "rrc/graph.hpp"
#include "rrc/protocol.hpp"

namespace rrc {

/// Realized link reliability for one round; one flag per non-self-loop link
/// in canonical order. Self-loops are always reliable and never listed.
struct DropMask {
  int round = 0;
  std::vector<std::uint8_t> reliable;

  bool is_reliable(int link) const { return reliable.at(link) != 0; }

  static DropMask all_reliable(const Graph& graph, int round);
  static DropMask all_dropped(const Graph& graph, int round);

  friend bool operator==(const DropMask&, const DropMask&) = default;
};

/// Link-failure random source: std::mt19937_64 seeded through std::seed_seq
/// with the 32-bit halves of (seed, stream). Both engines are fully specified
/// by the C++ standard, so sequences are identical on every conforming
/// platform. Distinct streams serve Monte Carlo runs and samples.
class LinkRng {
 public:
  explicit LinkRng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Uniform double in [0,1) built from the top 53 bits of one draw.
  double uniform();

 private:
  std::mt19937_64 engine_;
};

/// Draws X_k for every link in canonical order, one uniform per link:
/// reliable iff u < q.
DropMask draw_mask(const Graph& graph, LinkRng& rng, int round);

enum class Mode { ideal, robust };

struct RunConfig {
  Graph graph;
  InitialConditions init;
  int steps = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  GatingPolicy gating = GatingPolicy::positive();
  Mode mode = Mode::robust;

  void validate() const;
};

/// Snapshot after one round. Round 0 holds the initial conditions, empty
/// buffers and an empty mask.
struct RoundRecord {
  int round = 0;
  DropMask mask;
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> buffer_y;  // sigma - rho per link, canonical order
  std::vector<double> buffer_z;
  std::vector<std::optional<double>> estimate;  // last gated value per node
  std::vector<std::uint8_t> gated;               // 1 if refreshed this round
};

struct Trace {
  std::vector<RoundRecord> rounds;  // steps + 1 entries
  std::vector<std::vector<int>> update_times;

  int steps() const { return static_cast<int>(rounds.size()) - 1; }

  /// Augmented state [node y..., buffer y...] at round k; same for z.
  std::vector<double> augmented_y(int k) const;
  std::vector<double> augmented_z(int k) const;

  std::vector<DropMask> masks() const;

  /// max_i |estimate - target| over nodes at the final round; infinity when
  /// some node never produced an estimate.
  double final_error(double target) const;
};

Trace run(const RunConfig& config);

/// Runs with externally supplied masks (one per round, rounds 1..steps).
/// Throws ConfigError when a mask does not fit the graph.
Trace replay(const RunConfig& config, std::span<const DropMask> masks);

/// Draws the mask sequence run(config) would use.
std::vector<DropMask> draw_masks(const RunConfig& config);

/// Trace CSV: k,entity,kind,y,z,estimate,gated in canonical index order.
void write_trace_csv(std::ostream& out, const Trace& trace, const Graph& graph);

/// Mask CSV: k,from,to,reliable (one-based node ids).
void write_mask_csv(std::ostream& out, std::span<const DropMask> masks, const Graph& graph);

/// Evaluates fn(0..count-1) on up to `threads` workers and returns the
/// results in index order, independent of scheduling.
template <class Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  std::vector<std::optional<Result>> slots(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));

  std::mutex mutex;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t index;
      {
        std::lock_guard lock(mutex);
        if (next >= count || failure) return;
        index = next++;
      }
      try {
        slots[index].emplace(fn(index));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Result> results;
  results.reserve(count);
  for (auto& slot : slots) results.push_back(std::move(*slot));
  return results;
}

}  // namespace rrc
