#pragma once

// Builds the network input tensors from a system state: miscellaneous,
// vehicle, request and request-vehicle feature blocks, padded to F_max, with
// the critic-side coordination features.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "amod/matching.hpp"
#include "amod/rebalance.hpp"
#include "amod/sim.hpp"

namespace amod {

struct Observation {
  int f_max = 0;
  int active = 0;  // F_t
  int customers = 0;
  int vehicles = 0;
  int misc_dim = 0, veh_dim = 0, req_dim = 0, pair_dim = 0;
  std::vector<double> misc;                // misc_dim
  std::vector<double> veh;                 // vehicles x veh_dim
  std::vector<double> req;                 // f_max x req_dim, padded zeros
  std::vector<double> pair;                // vehicles x f_max x pair_dim
  std::vector<std::uint8_t> valid;         // per slot

  double* veh_at(int j) { return veh.data() + static_cast<size_t>(j) * veh_dim; }
  const double* veh_at(int j) const {
    return veh.data() + static_cast<size_t>(j) * veh_dim;
  }
  double* req_at(int i) { return req.data() + static_cast<size_t>(i) * req_dim; }
  const double* req_at(int i) const {
    return req.data() + static_cast<size_t>(i) * req_dim;
  }
  double* pair_at(int j, int i) {
    return pair.data() + (static_cast<size_t>(j) * f_max + i) * pair_dim;
  }
  const double* pair_at(int j, int i) const {
    return pair.data() + (static_cast<size_t>(j) * f_max + i) * pair_dim;
  }
};

struct FeatureDims {
  int misc = 3;
  int veh = 4;
  int req = 5;
  int pair = 1;
};

inline FeatureDims feature_dims(bool rebalancing, bool critic) {
  FeatureDims d;
  if (rebalancing) d.req += 3;  // flag + origin/destination occupancy
  if (critic) {
    d.req += 1;   // accept flag
    d.veh += 4;   // newly assigned origin/destination encodings
    d.pair += 1;  // waiting-time-achievable flag
  }
  return d;
}

// Remaining steps until the vehicle has finished all buffered legs.
inline int steps_to_end(const OperatingGraph& g, const Vehicle& k) {
  int s = k.steps_to_position;
  ZoneId pos = k.position;
  auto leg = [&](const Request& r) {
    if (!r.is_rebalancing() && !r.onboard) {
      s += g.shortest_route(pos, r.origin).steps;
      pos = r.origin;
    }
    s += g.shortest_route(pos, r.destination).steps;
    pos = r.destination;
  };
  if (k.buffer1) leg(*k.buffer1);
  if (k.buffer2) leg(*k.buffer2);
  return s;
}

namespace detail {

inline Observation encode_common(const FleetSim& sim, const SystemState& s,
                                 const std::vector<Request>& slots,
                                 const std::vector<double>* avg_cum,
                                 int requests_so_far, int f_max, bool critic) {
  const OperatingGraph& g = sim.graph();
  if (static_cast<int>(slots.size()) > f_max)
    throw std::logic_error("encode: F_t exceeds F_max");
  const bool reb = sim.params().rebalancing;
  const FeatureDims dims = feature_dims(reb, critic);

  Observation obs;
  obs.f_max = f_max;
  obs.active = static_cast<int>(slots.size());
  obs.customers = sim.customer_count(s);
  obs.vehicles = s.fleet_size();
  obs.misc_dim = dims.misc;
  obs.veh_dim = dims.veh;
  obs.req_dim = dims.req;
  obs.pair_dim = dims.pair;
  obs.misc.assign(dims.misc, 0.0);
  obs.veh.assign(static_cast<size_t>(obs.vehicles) * dims.veh, 0.0);
  obs.req.assign(static_cast<size_t>(f_max) * dims.req, 0.0);
  obs.pair.assign(static_cast<size_t>(obs.vehicles) * f_max * dims.pair, 0.0);
  obs.valid.assign(f_max, 0);

  const double max_steps = std::max(1, g.max_steps());
  const double max_dist = std::max(1.0, g.max_distance_m());

  // Miscellaneous: time, fleet activity, observed-vs-average demand.
  obs.misc[0] = s.horizon > 0 ? static_cast<double>(s.t) / s.horizon : 0.0;
  double busy = 0.0;
  for (const Vehicle& k : s.vehicles) busy += steps_to_end(g, k);
  obs.misc[1] = busy / (std::max(1, obs.vehicles) * max_steps);
  double avg = 1.0;
  if (avg_cum && s.t < static_cast<int>(avg_cum->size())) avg = (*avg_cum)[s.t];
  obs.misc[2] = avg > 0.0 ? requests_so_far / avg : 1.0;

  ZoneOccupancy occ;
  if (reb) occ = zone_occupancy(s, g);

  for (int j = 0; j < obs.vehicles; ++j) {
    const Vehicle& k = s.vehicles[j];
    double* v = obs.veh_at(j);
    const auto [eq, er] = g.normalized_axial(end_position(k));
    v[0] = eq;
    v[1] = er;
    v[2] = steps_to_end(g, k) / max_steps;
    v[3] = k.buffered() / 2.0;
  }

  for (int i = 0; i < obs.active; ++i) {
    const Request& r = slots[i];
    obs.valid[i] = 1;
    double* f = obs.req_at(i);
    const auto [oq, orr] = g.normalized_axial(r.origin);
    const auto [dq, dr] = g.normalized_axial(r.destination);
    f[0] = oq;
    f[1] = orr;
    f[2] = dq;
    f[3] = dr;
    f[4] = g.shortest_route(r.origin, r.destination).dist_m / max_dist;
    if (reb) {
      f[5] = r.is_rebalancing() ? 1.0 : 0.0;
      f[6] = static_cast<double>(occ.at(r.origin)) / std::max(1, obs.vehicles);
      f[7] = static_cast<double>(occ.at(r.destination)) / std::max(1, obs.vehicles);
    }
  }

  for (int j = 0; j < obs.vehicles; ++j) {
    const ZoneId ep = end_position(s.vehicles[j]);
    for (int i = 0; i < obs.active; ++i) {
      obs.pair_at(j, i)[0] =
          g.shortest_route(ep, slots[i].origin).dist_m / max_dist;
    }
  }
  return obs;
}

}  // namespace detail

inline Observation encode_actor(const FleetSim& sim, const SystemState& s,
                                const std::vector<Request>& slots,
                                const std::vector<double>* avg_cum,
                                int requests_so_far, int f_max) {
  return detail::encode_common(sim, s, slots, avg_cum, requests_so_far, f_max,
                               false);
}

inline Observation encode_critic(const FleetSim& sim, const SystemState& s,
                                 const std::vector<Request>& slots,
                                 const std::vector<double>* avg_cum,
                                 int requests_so_far, int f_max,
                                 const CoordinatedAction& act) {
  Observation obs = detail::encode_common(sim, s, slots, avg_cum,
                                          requests_so_far, f_max, true);
  const OperatingGraph& g = sim.graph();
  const int accept_idx = obs.req_dim - 1;
  for (int i = 0; i < obs.active; ++i)
    if (i < static_cast<int>(act.per_request.size()) && act.per_request[i] != 0)
      obs.req_at(i)[accept_idx] = 1.0;
  for (int j = 0; j < obs.vehicles; ++j) {
    const int i = j < static_cast<int>(act.per_vehicle.size())
                      ? act.per_vehicle[j]
                      : -1;
    if (i >= 0) {
      const Request& r = slots.at(i);
      double* v = obs.veh_at(j);
      const auto [oq, orr] = g.normalized_axial(r.origin);
      const auto [dq, dr] = g.normalized_axial(r.destination);
      v[4] = oq;
      v[5] = orr;
      v[6] = dq;
      v[7] = dr;
    }
  }
  // Waiting-time flag: can the request still be picked up within omega_max.
  const int omega_max = sim.params().max_waiting;
  for (int j = 0; j < obs.vehicles; ++j) {
    const Vehicle& k = s.vehicles[j];
    const ZoneId ep = end_position(k);
    const int busy = steps_to_end(g, k);
    for (int i = 0; i < obs.active; ++i) {
      const Request& r = slots[i];
      double flag = 1.0;
      if (!r.is_rebalancing()) {
        const int needed = busy + g.shortest_route(ep, r.origin).steps;
        flag = needed <= omega_max - r.waiting ? 1.0 : 0.0;
      }
      obs.pair_at(j, i)[1] = flag;
    }
  }
  return obs;
}

// Uniform permutation of the customer slots; rebalancing and padding slots
// keep their positions. New slot i holds old slot perm[i].
inline std::vector<int> make_slot_perm(int customers, int f_max,
                                       std::mt19937_64& rng) {
  std::vector<int> perm(f_max);
  for (int i = 0; i < f_max; ++i) perm[i] = i;
  for (int i = customers - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

// Applies a slot permutation in place (new slot i holds old slot perm[i]).
inline void permute_slots(Observation& obs, const std::vector<int>& perm) {
  Observation src = obs;
  for (int i = 0; i < obs.f_max; ++i) {
    const int from = perm[i];
    if (from == i) continue;
    std::copy(src.req_at(from), src.req_at(from) + obs.req_dim, obs.req_at(i));
    obs.valid[i] = src.valid[from];
    for (int j = 0; j < obs.vehicles; ++j)
      std::copy(src.pair_at(j, from), src.pair_at(j, from) + obs.pair_dim,
                obs.pair_at(j, i));
  }
}

// Shuffles the customer slots in place and returns the permutation used.
// Applying the inverse permutation (or mapping the network's per-slot output
// for new slot i back to old slot perm[i]) restores the original order.
inline std::vector<int> shuffle_slots(Observation& obs, std::mt19937_64& rng) {
  const std::vector<int> perm = make_slot_perm(obs.customers, obs.f_max, rng);
  permute_slots(obs, perm);
  return perm;
}

}  // namespace amod
