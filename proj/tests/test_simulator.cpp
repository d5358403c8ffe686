#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rrc/simulator.hpp"
#include "support.hpp"

using namespace rrc;
using doctest::Approx;

namespace {

RunConfig config(Graph g, std::vector<double> y0, int steps, std::uint64_t seed,
                 Mode mode = Mode::robust) {
  std::vector<double> z0(g.node_count(), 1.0);
  return RunConfig{std::move(g), {std::move(y0), std::move(z0)}, steps, seed, 0,
                   GatingPolicy::positive(), mode};
}

double relative_mass_error(const Trace& t, int k, bool z) {
  const auto v = z ? t.augmented_z(k) : t.augmented_y(k);
  const auto v0 = z ? t.augmented_z(0) : t.augmented_y(0);
  double total = 0.0, total0 = 0.0;
  for (double x : v) total += x;
  for (double x : v0) total0 += x;
  return std::abs(total - total0) / total0;
}

}  // namespace

TEST_CASE("draw_mask") {
  SUBCASE("certain links are always up") {
    const Graph g = testing::complete(4, 1.0);
    LinkRng rng(3);
    for (int k = 1; k <= 50; ++k) CHECK(draw_mask(g, rng, k) == DropMask::all_reliable(g, k));
  }
  SUBCASE("empirical reliability of a fair link") {
    const Graph g = Graph::create(2, {{0, 1, 0.5}, {1, 0, 1.0}});
    LinkRng rng(2024);
    int up = 0;
    for (int k = 1; k <= 10000; ++k) up += draw_mask(g, rng, k).reliable[0];
    const double fraction = up / 10000.0;
    CHECK(fraction >= 0.48);
    CHECK(fraction <= 0.52);
  }
  SUBCASE("same seed, same sequence; different stream, different sequence") {
    const Graph g = testing::ring(5, 0.5);
    LinkRng a(42), b(42), c(42, 1);
    bool any_difference = false;
    for (int k = 1; k <= 100; ++k) {
      const DropMask ma = draw_mask(g, a, k);
      CHECK(ma == draw_mask(g, b, k));
      any_difference = any_difference || !(ma == draw_mask(g, c, k));
    }
    CHECK(any_difference);
  }
  SUBCASE("first draws are pinned") {
    // Guards the documented generator construction against silent changes.
    // Values from a separate reimplementation of seed_seq and mt19937_64.
    LinkRng rng(42);
    CHECK(rng.uniform() == 0.48972255042353174);
    CHECK(rng.uniform() == 0.42321393806600394);
    CHECK(LinkRng(42, 1).uniform() == 0.8379890331048921);
  }
}

TEST_CASE("empirical link reliability matches q within 3 sigma") {
  const Graph g = testing::complete(3, 0.3);
  LinkRng rng(77);
  const int rounds = 20000;
  std::vector<int> up(g.link_count(), 0);
  for (int k = 1; k <= rounds; ++k) {
    const DropMask m = draw_mask(g, rng, k);
    for (int e = 0; e < g.link_count(); ++e) up[e] += m.reliable[e];
  }
  const double sigma = std::sqrt(0.3 * 0.7 / rounds);
  for (int count : up) CHECK(std::abs(count / double(rounds) - 0.3) <= 3 * sigma);
}

TEST_CASE("run records the two-node hand trace") {
  const Graph g = testing::two_node();
  // Find a seed whose first mask drops (1,2) and delivers (2,1).
  std::uint64_t seed = 0;
  for (;; ++seed) {
    LinkRng rng(seed);
    const DropMask m = draw_mask(g, rng, 1);
    if (m.reliable == std::vector<std::uint8_t>{0, 1}) break;
  }
  const Trace t = run(config(g, {1, 3}, 5, seed));
  CHECK(t.rounds[1].y == std::vector<double>{2.0, 1.5});
  CHECK(t.rounds[1].buffer_y == std::vector<double>{0.5, 0.0});
}

TEST_CASE("trace shape") {
  const Trace t = run(config(testing::ring(4), {1, 2, 3, 4}, 1, 8));
  REQUIRE(t.rounds.size() == 2);
  CHECK(t.steps() == 1);
  CHECK(t.rounds[0].round == 0);
  CHECK(t.rounds[0].y == std::vector<double>{1, 2, 3, 4});
  for (double nu : t.rounds[0].buffer_y) CHECK(nu == 0.0);
  CHECK(t.rounds[1].mask.reliable.size() == 4);
}

TEST_CASE("perfect-link run gives the exact ratio at every round") {
  const Trace t = run(config(testing::two_node(1.0), {1, 3}, 10, 1));
  for (int k = 1; k <= 10; ++k)
    for (const auto& e : t.rounds[k].estimate) CHECK(*e == 2.0);
}

TEST_CASE("replay reproduces run") {
  const RunConfig cfg = config(testing::complete(3, 0.5), {1, 2, 9}, 80, 42);
  const Trace a = run(cfg);
  const auto masks = a.masks();
  CHECK(masks == draw_masks(cfg));
  const Trace b = replay(cfg, masks);
  REQUIRE(b.rounds.size() == a.rounds.size());
  for (std::size_t k = 0; k < a.rounds.size(); ++k) {
    CHECK(a.rounds[k].y == b.rounds[k].y);
    CHECK(a.rounds[k].z == b.rounds[k].z);
    CHECK(a.rounds[k].buffer_y == b.rounds[k].buffer_y);
    CHECK(a.rounds[k].estimate == b.rounds[k].estimate);
  }
  CHECK(a.update_times == b.update_times);
}

TEST_CASE("replay with every link down halves the node mass each round") {
  const Graph g = testing::two_node();
  const int K = 12;
  RunConfig cfg = config(g, {1, 3}, K, 0);
  std::vector<DropMask> masks;
  for (int k = 1; k <= K; ++k) masks.push_back(DropMask::all_dropped(g, k));
  const Trace t = replay(cfg, masks);
  for (int k = 1; k <= K; ++k) {
    CHECK(t.rounds[k].y[0] == std::ldexp(1.0, -k));
    CHECK(t.rounds[k].y[1] == 3 * std::ldexp(1.0, -k));
    CHECK(relative_mass_error(t, k, false) <= 1e-12);
  }
}

TEST_CASE("replay rejects malformed masks") {
  const Graph g = testing::two_node();
  RunConfig cfg = config(g, {1, 3}, 2, 0);
  std::vector<DropMask> short_masks{DropMask::all_reliable(g, 1)};
  CHECK_THROWS_AS(replay(cfg, short_masks), ConfigError);
  std::vector<DropMask> wrong_size{DropMask::all_reliable(g, 1), DropMask{2, {1}}};
  CHECK_THROWS_AS(replay(cfg, wrong_size), ConfigError);
  std::vector<DropMask> wrong_round{DropMask::all_reliable(g, 1), DropMask::all_reliable(g, 3)};
  CHECK_THROWS_AS(replay(cfg, wrong_round), ConfigError);
}

TEST_CASE("run validates its configuration") {
  CHECK_THROWS_AS(run(config(testing::two_node(), {1, 3}, 0, 0)), ConfigError);
  CHECK_THROWS_AS(run(config(testing::two_node(), {1}, 3, 0)), ConfigError);
}

TEST_CASE("alternating masks conserve mass and match the buffer model") {
  const Graph g = testing::ring(4, 0.5);
  const int K = 40;
  std::vector<DropMask> masks;
  for (int k = 1; k <= K; ++k)
    masks.push_back(k % 2 ? DropMask::all_dropped(g, k) : DropMask::all_reliable(g, k));
  const std::vector<double> y0{3, 1, 4, 1};
  const Trace t = replay(config(g, y0, K, 0), masks);
  const auto model = testing::buffer_model(g, y0, masks);
  for (int k = 0; k <= K; ++k) {
    CHECK(relative_mass_error(t, k, false) <= 1e-12);
    CHECK(relative_mass_error(t, k, true) <= 1e-12);
    for (int i = 0; i < 4; ++i) CHECK(t.rounds[k].y[i] == Approx(model[k].y[i]).epsilon(1e-13));
    for (int e = 0; e < 4; ++e)
      CHECK(t.rounds[k].buffer_y[e] == Approx(model[k].buffer[e]).epsilon(1e-13));
  }
}

TEST_CASE("robust and ideal modes agree when every link delivers") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = testing::random_graph(2 + trial % 5, rng);
    std::vector<double> y0;
    for (int i = 0; i < g.node_count(); ++i) y0.push_back(1.0 + i * 0.5);
    const int K = 50;
    RunConfig robust = config(g, y0, K, 0);
    std::vector<DropMask> masks;
    for (int k = 1; k <= K; ++k) masks.push_back(DropMask::all_reliable(g, k));
    const Trace a = replay(robust, masks);
    const Trace b = run(config(g, y0, K, 0, Mode::ideal));
    for (int k = 0; k <= K; ++k) {
      for (int i = 0; i < g.node_count(); ++i) {
        CHECK(a.rounds[k].y[i] == Approx(b.rounds[k].y[i]).epsilon(1e-13));
        CHECK(a.rounds[k].z[i] == Approx(b.rounds[k].z[i]).epsilon(1e-13));
      }
      for (double nu : a.rounds[k].buffer_y) CHECK(nu == 0.0);
    }
  }
}

TEST_CASE("ideal mode ignores link reliability") {
  const Trace t = run(config(testing::ring(5, 0.1), {5, 0, 0, 0, 0}, 200, 3, Mode::ideal));
  for (const auto& m : t.masks()) CHECK(m == DropMask::all_reliable(testing::ring(5, 0.1), m.round));
  for (const auto& e : t.rounds.back().estimate) CHECK(*e == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero total y converges trivially to zero") {
  const Trace t = run(config(testing::complete(3, 0.5), {0, 0, 0}, 30, 4));
  for (const auto& r : t.rounds)
    for (std::size_t i = 0; i < r.estimate.size(); ++i)
      if (r.estimate[i]) CHECK(*r.estimate[i] == 0.0);
  CHECK(t.final_error(0.0) == 0.0);
}

TEST_CASE("positive gating never divides by zero") {
  // z mass only at node 1 on a directed ring; other nodes start with z = 0.
  const Graph g = testing::ring(4, 0.4);
  RunConfig cfg{g, {{1, 0, 0, 0}, {1, 0, 0, 0}}, 200, 6, 0, GatingPolicy::positive(), Mode::robust};
  const Trace t = run(cfg);
  for (const auto& r : t.rounds)
    for (std::size_t i = 0; i < r.estimate.size(); ++i) {
      if (r.gated[i]) CHECK(r.z[i] > 0.0);
      if (r.estimate[i]) CHECK(std::isfinite(*r.estimate[i]));
    }
}

TEST_CASE("csv exports") {
  const Graph g = testing::two_node();
  const Trace t = run(config(g, {1, 3}, 2, 42));
  std::ostringstream trace_csv, mask_csv;
  write_trace_csv(trace_csv, t, g);
  const auto masks = t.masks();
  write_mask_csv(mask_csv, masks, g);

  std::istringstream lines(trace_csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "k,entity,kind,y,z,estimate,gated");
  std::getline(lines, line);
  CHECK(line == "0,1,node,1,1,,0");
  std::getline(lines, line);
  CHECK(line == "0,2,node,3,1,,0");
  std::getline(lines, line);
  CHECK(line == "0,1-2,buffer,0,0,,");

  std::istringstream mlines(mask_csv.str());
  std::getline(mlines, line);
  CHECK(line == "k,from,to,reliable");
  int rows = 0;
  while (std::getline(mlines, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("parallel_map keeps index order") {
  const auto squares = parallel_map(100, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < 100; ++i) CHECK(squares[i] == i * i);
  CHECK_THROWS_AS(parallel_map(10, 3,
                               [](std::size_t i) -> int {
                                 if (i == 7) throw std::runtime_error("boom");
                                 return 0;
                               }),
                  std::runtime_error);
}
