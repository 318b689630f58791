#pragma once

// Rebalancing request construction and the occupancy-based training signal.

#include <cmath>
#include <vector>

#include "amod/geo.hpp"
#include "amod/state.hpp"

namespace amod {

enum class RebalanceVariant { all_but_own, neighbors_only };

struct RebalancingConfig {
  RebalanceVariant variant = RebalanceVariant::all_but_own;
  bool shaping_enabled = true;
  double cost_magnitude_per_km = 2.0;  // |c|
  double min_edge_km = 0.459;          // l, the graph's minimum edge distance
};

// True iff `dest` is in vehicle j's rebalancing set B_{j,t}.
inline bool rebalance_feasible(const RebalancingConfig& cfg,
                               const OperatingGraph& g, ZoneId vehicle_pos,
                               ZoneId dest) {
  if (dest == vehicle_pos) return false;
  if (cfg.variant == RebalanceVariant::all_but_own) return true;
  for (ZoneId n : g.neighbors(vehicle_pos))
    if (n == dest) return true;
  return false;
}

inline std::vector<Request> rebalancing_set(const RebalancingConfig& cfg,
                                            const Vehicle& vehicle,
                                            const OperatingGraph& g) {
  std::vector<Request> out;
  for (ZoneId v = 0; v < g.zone_count(); ++v)
    if (rebalance_feasible(cfg, g, vehicle.position, v))
      out.push_back(Request::rebalancing_req(v));
  return out;
}

// Vehicle counts per zone keyed by final destination.
struct ZoneOccupancy {
  std::vector<int> count;
  int avg_ceil = 0;   // ceil(K / |V|)
  int avg_floor = 0;  // floor(K / |V|)

  int at(ZoneId v) const { return count[v]; }
};

// End position of a vehicle: the destination of the request served last, or
// the current vertex when idle.
inline ZoneId end_position(const Vehicle& k) {
  if (k.buffer2) return k.buffer2->destination;
  if (k.buffer1) return k.buffer1->destination;
  return k.position;
}

inline ZoneOccupancy zone_occupancy(const SystemState& s, const OperatingGraph& g) {
  ZoneOccupancy occ;
  occ.count.assign(g.zone_count(), 0);
  for (const Vehicle& k : s.vehicles) ++occ.count[end_position(k)];
  const int kk = s.fleet_size();
  occ.avg_floor = kk / g.zone_count();
  occ.avg_ceil = (kk + g.zone_count() - 1) / g.zone_count();
  return occ;
}

// Occupancy-based training signal for a rebalancing move from `from_zone`
// (the accepting vehicle's zone) to `to_zone`. Added to the agent's training
// reward only, never to evaluation profit.
inline double shaping_signal(const ZoneOccupancy& occ, ZoneId from_zone,
                             ZoneId to_zone, const RebalancingConfig& cfg) {
  const int o = occ.at(from_zone);
  const int d = occ.at(to_zone);
  double xd;
  if (occ.avg_floor == 0) {
    xd = d == 0 ? 1.0 : 0.0;  // guard: fewer vehicles than zones
  } else {
    xd = 1.0 - std::min(1.0, static_cast<double>(d) / occ.avg_floor);
  }
  double xo;
  if (o < occ.avg_ceil) {
    xo = (occ.avg_ceil - o + 1) * (-2.0) / occ.avg_ceil;
  } else {
    xo = (static_cast<double>(o - occ.avg_ceil) / occ.avg_ceil) * xd;
  }
  const double x = xo / 2.0 + 2.0 * xd;
  return cfg.cost_magnitude_per_km * cfg.min_edge_km * x;
}

}  // namespace amod
