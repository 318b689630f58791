#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "amod/demand.hpp"
#include "amod/sim.hpp"

using namespace amod;

namespace {

const LatLon kAnchor{40.7075, -74.0113};

FleetSim small_sim(bool rebalancing = false) {
  static const OperatingGraph g = OperatingGraph::build_hex_grid(11, 459.0, 2, kAnchor);
  SimParams p;
  p.max_waiting = 5;
  p.rebalancing = rebalancing;
  return FleetSim(g, p);
}

CoordinatedAction reject_all(int vehicles, int slots) {
  CoordinatedAction a;
  a.per_request.assign(slots, 0);
  a.per_vehicle.assign(vehicles, -1);
  a.active_reject.assign(vehicles, 1);
  return a;
}

}  // namespace

TEST_CASE("feasibility per the action-space rules") {
  const FleetSim sim = small_sim(true);
  SystemState s = sim.initial_state(2, 10);
  s.customer_requests = {Request::customer_req(0, 3, 0)};
  const auto slots = sim.request_slots(s);
  REQUIRE(slots.size() == 1 + 11);

  SECTION("customer request, free buffer2 -> feasible") {
    CHECK(sim.feasible(s, slots, 0, 0));
    s.vehicles[0].buffer1 = Request::customer_req(1, 2, 0);
    CHECK(sim.feasible(s, slots, 0, 0));
  }
  SECTION("both buffers full -> infeasible") {
    s.vehicles[0].buffer1 = Request::customer_req(1, 2, 0);
    s.vehicles[0].buffer2 = Request::customer_req(2, 3, 0);
    CHECK_FALSE(sim.feasible(s, slots, 0, 0));
  }
  SECTION("rebalancing requires an idle vehicle and a foreign zone") {
    // slot 1 is the rebalancing request for zone 0, vehicle 0 sits there
    CHECK_FALSE(sim.feasible(s, slots, 1, 0));
    CHECK(sim.feasible(s, slots, 2, 0));
    s.vehicles[0].buffer1 = Request::customer_req(1, 2, 0);
    CHECK_FALSE(sim.feasible(s, slots, 2, 0));
  }
}

TEST_CASE("apply_action appends FIFO and clears the batch") {
  const FleetSim sim = small_sim();
  SystemState s = sim.initial_state(2, 10);
  s.customer_requests = {Request::customer_req(0, 3, 0),
                         Request::customer_req(1, 4, 0)};
  const auto slots = sim.request_slots(s);

  SECTION("all-reject leaves everything but the batch unchanged") {
    const SystemState post = sim.apply_action(s, slots, reject_all(2, 2));
    CHECK(post.customer_requests.empty());
    CHECK(post.t == s.t);
    for (int j = 0; j < 2; ++j) {
      CHECK(post.vehicles[j].position == s.vehicles[j].position);
      CHECK(!post.vehicles[j].buffer1);
    }
  }
  SECTION("assignment fills buffer1 then buffer2") {
    CoordinatedAction a = reject_all(2, 2);
    a.per_vehicle[0] = 0;
    a.per_request[0] = 1;
    SystemState post = sim.apply_action(s, slots, a);
    REQUIRE(post.vehicles[0].buffer1);
    CHECK(post.vehicles[0].buffer1->origin == 0);
    CHECK(!post.vehicles[0].buffer2);

    post.customer_requests = {Request::customer_req(2, 5, 1)};
    const auto slots2 = sim.request_slots(post);
    CoordinatedAction a2 = reject_all(2, 1);
    a2.per_vehicle[0] = 0;
    a2.per_request[0] = 1;
    const SystemState post2 = sim.apply_action(post, slots2, a2);
    REQUIRE(post2.vehicles[0].buffer2);
    CHECK(post2.vehicles[0].buffer2->origin == 2);
  }
  SECTION("infeasible assignment is a contract violation") {
    s.vehicles[0].buffer1 = Request::customer_req(1, 2, 0);
    s.vehicles[0].buffer2 = Request::customer_req(2, 3, 0);
    CoordinatedAction a = reject_all(2, 2);
    a.per_vehicle[0] = 0;
    CHECK_THROWS_AS(sim.apply_action(s, slots, a), std::logic_error);
  }
}

TEST_CASE("advance dynamics: revenue at pickup, cost per edge departure") {
  const FleetSim sim = small_sim();
  const OperatingGraph& g = sim.graph();

  // find origin/destination 2 hops apart with the vehicle already at origin
  ZoneId o = 0, d = -1;
  for (ZoneId v = 0; v < g.zone_count(); ++v)
    if (g.shortest_route(0, v).steps == 4) d = v;
  REQUIRE(d >= 0);

  SystemState s = sim.initial_state(1, 10);
  s.vehicles[0].position = o;
  s.customer_requests = {Request::customer_req(o, d, 0)};
  auto slots = sim.request_slots(s);
  CoordinatedAction a = reject_all(1, 1);
  a.per_vehicle[0] = 0;
  a.per_request[0] = 1;
  SystemState post = sim.apply_action(s, slots, a);

  // step 1: pickup (revenue 0.918 km x 5.0) and first edge departure
  auto [s1, out1] = sim.advance(post, {});
  CHECK(out1.revenue == Catch::Approx(4.59));
  CHECK(out1.cost == Catch::Approx(0.918));
  CHECK(out1.served == 1);
  CHECK(s1.vehicles[0].steps_to_position == 1);

  auto [s2, out2] = sim.advance(s1, {});
  CHECK(out2.revenue == 0.0);
  CHECK(out2.cost == 0.0);
  auto [s3, out3] = sim.advance(s2, {});
  CHECK(out3.cost == Catch::Approx(0.918));
  auto [s4, out4] = sim.advance(s3, {});
  CHECK(out4.cost == 0.0);
  CHECK(s4.vehicles[0].position == d);
  CHECK(s4.vehicles[0].idle());

  const double total_cost = out1.cost + out2.cost + out3.cost + out4.cost;
  CHECK(total_cost == Catch::Approx(2 * 0.459 * 2.0));
}

TEST_CASE("late pickup proceeds unbilled") {
  const FleetSim sim = small_sim();
  SystemState s = sim.initial_state(1, 10);
  Request r = Request::customer_req(0, 1, 0);
  r.waiting = 6;  // omega_max + 1
  s.vehicles[0].position = 0;
  s.vehicles[0].buffer1 = r;
  auto [s1, out] = sim.advance(s, {});
  CHECK(out.revenue == 0.0);
  CHECK(out.served == 1);
  REQUIRE(s1.vehicles[0].buffer1);
  CHECK(s1.vehicles[0].buffer1->onboard);
}

TEST_CASE("idle fleet with empty batch advances with zero outcome") {
  const FleetSim sim = small_sim();
  SystemState s = sim.initial_state(3, 10);
  auto [s1, out] = sim.advance(s, {});
  CHECK(s1.t == 1);
  CHECK(out.revenue == 0.0);
  CHECK(out.cost == 0.0);
  for (double r : out.per_agent_reward) CHECK(r == 0.0);
}

TEST_CASE("waiting time of a buffered unpicked request grows by one per step") {
  const FleetSim sim = small_sim();
  const OperatingGraph& g = sim.graph();
  ZoneId far = -1;
  for (ZoneId v = 0; v < g.zone_count(); ++v)
    if (g.shortest_route(0, v).steps >= 4) far = v;
  REQUIRE(far >= 0);
  SystemState s = sim.initial_state(1, 10);
  s.vehicles[0].position = 0;
  s.vehicles[0].buffer1 = Request::customer_req(far, 0, 0);
  auto [s1, out1] = sim.advance(s, {});
  REQUIRE(s1.vehicles[0].buffer1);
  CHECK(s1.vehicles[0].buffer1->waiting == 1);
  auto [s2, out2] = sim.advance(s1, {});
  CHECK(s2.vehicles[0].buffer1->waiting == 2);
}

TEST_CASE("run_episode accounting and conservation") {
  const FleetSim sim = small_sim();
  SECTION("zero requests give zero profit") {
    std::vector<std::vector<Request>> demand(10);
    auto policy = [](const SystemState& s, const std::vector<Request>&) {
      return WeightMatrix(s.fleet_size(), 6);
    };
    const EpisodeResult r = run_episode(sim, policy, demand, 3, 6);
    CHECK(r.profit == 0.0);
  }
  SECTION("single profitable request under an accept-everything policy") {
    const OperatingGraph& g = sim.graph();
    std::vector<std::vector<Request>> demand(10);
    demand[0].push_back(Request::customer_req(1, 2, 0));
    auto policy = [](const SystemState& s, const std::vector<Request>& slots) {
      WeightMatrix w(s.fleet_size(), 6);
      for (int j = 0; j < s.fleet_size(); ++j)
        for (size_t i = 0; i < slots.size(); ++i) w.at(j, (int)i + 1) = 0.9;
      return w;
    };
    const EpisodeResult r = run_episode(sim, policy, demand, 1, 6);
    const double fare = 5.0 * g.shortest_route(1, 2).dist_m / 1000.0;
    const double cost = 2.0 *
        (g.shortest_route(0, 1).dist_m + g.shortest_route(1, 2).dist_m) / 1000.0;
    CHECK(r.profit == Catch::Approx(fare - cost));
    // profit equals the trace totals
    double sum = 0.0;
    for (const StepRecord& rec : r.trace) sum += rec.outcome.profit();
    CHECK(r.profit == Catch::Approx(sum));
  }
  SECTION("per-step conservation: revenue - cost = sum of agent rewards") {
    std::mt19937_64 rng(11);
    const EpisodeSet set = generate_synthetic(2.0, sim.graph(), 20, 3, 99);
    auto policy = [&rng](const SystemState& s, const std::vector<Request>& slots) {
      WeightMatrix w(s.fleet_size(), 8);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int j = 0; j < s.fleet_size(); ++j)
        for (size_t i = 0; i < slots.size(); ++i) w.at(j, (int)i + 1) = u(rng);
      return w;
    };
    for (const Episode& ep : set.episodes) {
      const EpisodeResult r =
          run_episode(sim, policy, cap_batches({{ep}}, 8).episodes[0].batches, 4, 8);
      for (const StepRecord& rec : r.trace) {
        double sum = 0.0;
        for (double x : rec.outcome.per_agent_reward) sum += x;
        CHECK(rec.outcome.revenue - rec.outcome.cost == Catch::Approx(sum).margin(1e-9));
      }
    }
  }
}

TEST_CASE("episode replay with the same seed is identical") {
  const FleetSim sim = small_sim();
  const EpisodeSet set = generate_synthetic(2.0, sim.graph(), 15, 1, 5);
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto policy = [&rng](const SystemState& s, const std::vector<Request>& slots) {
      WeightMatrix w(s.fleet_size(), 8);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int j = 0; j < s.fleet_size(); ++j)
        for (size_t i = 0; i < slots.size(); ++i) w.at(j, (int)i + 1) = u(rng);
      return w;
    };
    return run_episode(sim, policy, cap_batches({{set.episodes[0]}}, 8).episodes[0].batches, 3, 8);
  };
  const EpisodeResult a = run(123), b = run(123);
  CHECK(a.profit == b.profit);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].per_request == b.trace[i].per_request);
}
