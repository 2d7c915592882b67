#include <doctest.h>

#include "maskforge/maxflow.hpp"
#include "support.hpp"

using namespace maskforge;
using testing::Rng;

TEST_CASE("single node") {
  FlowNetwork net(1);
  net.terminal[0] = {3.0, 2.0};
  const CutResult r = max_flow(net);
  CHECK(r.max_flow_value == 2.0);
  CHECK(r.source_side(0));
}

TEST_CASE("all capacities zero") {
  FlowNetwork net(4);
  net.add_edge(0, 1, 0, 0);
  net.add_edge(2, 3, 0, 0);
  const CutResult r = max_flow(net);
  CHECK(r.max_flow_value == 0.0);
  for (int i = 0; i < 4; ++i) CHECK_FALSE(r.source_side(i));
}

TEST_CASE("two nodes with a unit bottleneck") {
  FlowNetwork net(2);
  net.terminal[0] = {4.0, 0.0};
  net.terminal[1] = {0.0, 4.0};
  net.add_edge(0, 1, 1.0, 1.0);
  const CutResult r = max_flow(net);
  CHECK(r.max_flow_value == 1.0);
  CHECK(verify_cut(net, r) == 1.0);
  CHECK(r.source_side(0));
  CHECK_FALSE(r.source_side(1));
}

TEST_CASE("verify_cut of the trivial partitions") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const FlowNetwork net = testing::random_network(rng, 8, 10);
    double sink_sum = 0.0;
    double source_sum = 0.0;
    for (const auto& tc : net.terminal) {
      sink_sum += tc.to_sink;
      source_sum += tc.from_source;
    }
    const auto n = static_cast<std::size_t>(net.node_count);
    CHECK(verify_cut(net, std::vector<CutSide>(n, CutSide::kSource)) == sink_sum);
    CHECK(verify_cut(net, std::vector<CutSide>(n, CutSide::kSink)) == source_sum);
  }
}

TEST_CASE("validation rejects malformed networks") {
  FlowNetwork self(2);
  self.add_edge(1, 1, 1, 1);
  CHECK_THROWS_AS(max_flow(self), std::invalid_argument);
  FlowNetwork range(2);
  range.add_edge(0, 2, 1, 1);
  CHECK_THROWS_AS(max_flow(range), std::invalid_argument);
  FlowNetwork negative(1);
  negative.terminal[0].to_sink = -1;
  CHECK_THROWS_AS(max_flow(negative), std::invalid_argument);
}

TEST_CASE("random networks match brute force") {
  Rng rng(42);
  for (int t = 0; t < 300; ++t) {
    const FlowNetwork net = testing::random_network(rng, 10, 10);
    const CutResult r = max_flow(net);
    CHECK(r.max_flow_value == testing::brute_force_min_cut(net));
    CHECK(std::abs(verify_cut(net, r) - r.max_flow_value) <= 1e-6);
  }
}

TEST_CASE("scaling capacities scales the flow") {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    FlowNetwork net = testing::random_network(rng, 10, 10);
    const double base = max_flow(net).max_flow_value;
    const double c = rng.uniform(0.1, 7.0);
    for (auto& tc : net.terminal) {
      tc.from_source *= c;
      tc.to_sink *= c;
    }
    for (auto& e : net.edges) {
      e.cap_uv *= c;
      e.cap_vu *= c;
    }
    const CutResult scaled = max_flow(net);
    CHECK(scaled.max_flow_value == doctest::Approx(c * base).epsilon(1e-6));
    CHECK(std::abs(verify_cut(net, scaled) - scaled.max_flow_value) <= 1e-6 * std::max(1.0, scaled.max_flow_value));
  }
}

TEST_CASE("grid networks satisfy duality") {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const int w = rng.integer(5, 30);
    const int h = rng.integer(5, 30);
    FlowNetwork net(w * h);
    for (auto& tc : net.terminal) tc = {rng.uniform(0, 5), rng.uniform(0, 5)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (x + 1 < w) net.add_edge(i, i + 1, rng.uniform(0, 3), rng.uniform(0, 3));
        if (y + 1 < h) net.add_edge(i, i + w, rng.uniform(0, 3), rng.uniform(0, 3));
      }
    }
    const CutResult r = max_flow(net);
    CHECK(std::abs(verify_cut(net, r) - r.max_flow_value) <= 1e-6);
  }
}
