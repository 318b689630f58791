#include <catch2/catch_amalgamated.hpp>

#include "amod/rebalance.hpp"

using namespace amod;

namespace {
const LatLon kAnchor{40.7075, -74.0113};
}

TEST_CASE("rebalancing sets per variant") {
  const auto g11 = OperatingGraph::build_hex_grid(11, 459.0, 2, kAnchor);
  Vehicle k;
  k.position = 0;

  RebalancingConfig cfg;
  cfg.variant = RebalanceVariant::all_but_own;
  CHECK(rebalancing_set(cfg, k, g11).size() == 10);

  cfg.variant = RebalanceVariant::neighbors_only;
  const auto nbrs = rebalancing_set(cfg, k, g11);  // zone 0 is interior
  CHECK(nbrs.size() == 6);
  for (const Request& r : nbrs) {
    CHECK(r.is_rebalancing());
    CHECK(r.origin == r.destination);
    CHECK(r.destination != k.position);
  }

  const auto g2 = OperatingGraph::build_hex_grid(2, 100.0, 1, kAnchor);
  cfg.variant = RebalanceVariant::all_but_own;
  CHECK(rebalancing_set(cfg, k, g2).size() == 1);
  cfg.variant = RebalanceVariant::neighbors_only;
  CHECK(rebalancing_set(cfg, k, g2).size() == 1);
}

TEST_CASE("shaping signal hand traces") {
  RebalancingConfig cfg;
  cfg.cost_magnitude_per_km = 2.0;
  cfg.min_edge_km = 0.459;

  ZoneOccupancy occ;
  occ.avg_ceil = 2;
  occ.avg_floor = 2;

  SECTION("over-full origin, empty destination") {
    occ.count = {3, 0};
    CHECK(shaping_signal(occ, 0, 1, cfg) == Catch::Approx(2.0655));
  }
  SECTION("under-populated origin is penalized") {
    occ.count = {1, 2};
    CHECK(shaping_signal(occ, 0, 1, cfg) == Catch::Approx(-0.918));
  }
  SECTION("balanced zones give zero signal") {
    occ.count = {2, 2};
    CHECK(shaping_signal(occ, 0, 1, cfg) == Catch::Approx(0.0));
  }
  SECTION("sign structure") {
    // positive only when destination under-populated and origin not under
    occ.count = {3, 2};
    CHECK(shaping_signal(occ, 0, 1, cfg) <= 0.0);
    occ.count = {1, 0};
    CHECK(shaping_signal(occ, 0, 1, cfg) < 2.0 * 0.459 * 2.0);  // origin term negative
  }
}

TEST_CASE("zone occupancy counts by final destination") {
  const auto g = OperatingGraph::build_hex_grid(7, 459.0, 2, kAnchor);
  SystemState s;
  s.vehicles.resize(3);
  s.vehicles[0].position = 0;
  s.vehicles[1].position = 1;
  s.vehicles[1].buffer1 = Request::customer_req(1, 4, 0);
  s.vehicles[2].position = 2;
  s.vehicles[2].buffer1 = Request::customer_req(2, 3, 0);
  s.vehicles[2].buffer2 = Request::customer_req(3, 5, 0);

  const ZoneOccupancy occ = zone_occupancy(s, g);
  CHECK(occ.at(0) == 1);
  CHECK(occ.at(4) == 1);
  CHECK(occ.at(5) == 1);
  CHECK(occ.at(1) == 0);
  int total = 0;
  for (int c : occ.count) total += c;
  CHECK(total == 3);
  CHECK(occ.avg_floor == 0);
  CHECK(occ.avg_ceil == 1);
}
