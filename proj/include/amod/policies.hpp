#pragma once

// Non-learning baselines behind the same weight-matrix interface as the
// learned actor: the myopic profit-proportional policy, its rebalancing
// heuristic extension, the uniform-random policy, and the episode evaluator
// with its operational metrics.

#include <algorithm>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "amod/demand.hpp"
#include "amod/features.hpp"
#include "amod/sim.hpp"

namespace amod {

namespace detail {

// Largest fare on the graph; normalizes per-request profit into (0, 1].
inline double max_fare(const OperatingGraph& g, const Pricing& p) {
  return std::max(1e-12, p.rev_per_km * g.max_distance_m() / 1000.0);
}

// Profit of serving `r` with vehicle `k` after its buffered legs, or <= 0
// when unprofitable or the pickup cannot happen within the waiting budget.
inline double request_profit(const FleetSim& sim, const SystemState& s,
                             const Vehicle& k, const Request& r) {
  const OperatingGraph& g = sim.graph();
  const ZoneId ep = end_position(k);
  const RouteInfo pick = g.shortest_route(ep, r.origin);
  const RouteInfo trip = g.shortest_route(r.origin, r.destination);
  if (steps_to_end(g, k) + pick.steps > sim.params().max_waiting - r.waiting)
    return 0.0;
  const Pricing& p = sim.params().pricing;
  const double fare = p.rev_per_km * trip.dist_m / 1000.0;
  const double cost = p.cost_per_km * (pick.dist_m + trip.dist_m) / 1000.0;
  return fare - cost;
}

}  // namespace detail

// Weight proportional to the myopic profit of the pairing; zero for
// unprofitable or late-infeasible requests and for rebalancing slots.
inline WeightMatrix greedy_weights(const FleetSim& sim, const SystemState& s,
                                   const std::vector<Request>& slots,
                                   int f_max) {
  WeightMatrix w(s.fleet_size(), f_max);
  const double norm = detail::max_fare(sim.graph(), sim.params().pricing);
  for (int j = 0; j < s.fleet_size(); ++j)
    for (size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].is_rebalancing()) continue;
      const double profit =
          detail::request_profit(sim, s, s.vehicles[j], slots[i]);
      if (profit > 0.0) w.at(j, static_cast<int>(i) + 1) = profit / norm;
    }
  return w;
}

struct HeuristicOptions {
  // The source text scales the rebalancing weight with the vehicle's distance
  // to the destination zone; set to prefer nearby zones instead.
  bool inverse_distance = false;
};

// Customer weights as greedy_weights; a rebalancing slot gets a positive
// weight only when the vehicle's zone is over-populated and the destination
// under-populated, and always weighs below every surviving customer weight.
inline WeightMatrix heuristic_weights(const FleetSim& sim, const SystemState& s,
                                      const std::vector<Request>& slots,
                                      int f_max,
                                      const HeuristicOptions& opt = {}) {
  WeightMatrix w = greedy_weights(sim, s, slots, f_max);
  const OperatingGraph& g = sim.graph();
  const ZoneOccupancy occ = zone_occupancy(s, g);
  const double delta = w.threshold();

  double min_cust = 1.0;
  for (int j = 0; j < w.vehicles; ++j)
    for (int i = 1; i <= w.slots; ++i) {
      const double v = w.at(j, i);
      if (v > delta) min_cust = std::min(min_cust, v);
    }
  if (min_cust <= delta) return w;  // nothing to slot the rebalancing under

  const double max_dist = std::max(1.0, g.max_distance_m());
  for (int j = 0; j < w.vehicles; ++j) {
    const Vehicle& k = s.vehicles[j];
    if (!k.idle()) continue;
    if (occ.at(k.position) <= occ.avg_ceil) continue;
    for (size_t i = 0; i < slots.size(); ++i) {
      const Request& r = slots[i];
      if (!r.is_rebalancing()) continue;
      if (occ.at(r.destination) >= occ.avg_floor) continue;
      if (!rebalance_feasible(sim.params().reb, g, k.position, r.destination))
        continue;
      double frac =
          g.shortest_route(k.position, r.destination).dist_m / max_dist;
      frac = std::clamp(frac, 0.01, 1.0);
      if (opt.inverse_distance) frac = 1.01 - frac;
      w.at(j, static_cast<int>(i) + 1) = delta + 0.99 * (min_cust - delta) * frac;
    }
  }
  return w;
}

// Uniform weights per row, renormalized so each row sums to one.
inline WeightMatrix random_weights(int vehicles, int f_max,
                                   std::mt19937_64& rng) {
  WeightMatrix w(vehicles, f_max);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < vehicles; ++j) {
    double sum = 0.0;
    for (int i = 0; i <= f_max; ++i) {
      w.at(j, i) = u(rng);
      sum += w.at(j, i);
    }
    for (int i = 0; i <= f_max; ++i) w.at(j, i) /= sum;
  }
  return w;
}

inline WeightPolicy make_greedy_policy(const FleetSim& sim, int f_max) {
  return [&sim, f_max](const SystemState& s, const std::vector<Request>& slots) {
    return greedy_weights(sim, s, slots, f_max);
  };
}

inline WeightPolicy make_heuristic_policy(const FleetSim& sim, int f_max,
                                          HeuristicOptions opt = {}) {
  return [&sim, f_max, opt](const SystemState& s,
                            const std::vector<Request>& slots) {
    return heuristic_weights(sim, s, slots, f_max, opt);
  };
}

inline WeightPolicy make_random_policy(int f_max,
                                       std::shared_ptr<std::mt19937_64> rng) {
  return [f_max, rng](const SystemState& s, const std::vector<Request>&) {
    return random_weights(s.fleet_size(), f_max, *rng);
  };
}

// ---------------------------------------------------------------------------
// Episode evaluation with operational metrics

struct EpisodeMetrics {
  std::string label;
  double profit = 0.0;
  int requests = 0;
  int served = 0;
  int rejects_empty = 0;     // profitable rejects, destination zone empty
  int rejects_occupied = 0;  // profitable rejects, destination zone occupied
  double pickup_dist_zones_sum = 0.0;
  double wait_steps_sum = 0.0;

  double rejects_empty_pct() const {
    return requests > 0 ? 100.0 * rejects_empty / requests : 0.0;
  }
  double rejects_occupied_pct() const {
    return requests > 0 ? 100.0 * rejects_occupied / requests : 0.0;
  }
  double mean_pickup_dist_zones() const {
    return served > 0 ? pickup_dist_zones_sum / served : 0.0;
  }
  double mean_wait_min() const {
    return served > 0 ? wait_steps_sum / served : 0.0;
  }
};

struct EvaluationResult {
  std::vector<EpisodeMetrics> episodes;

  double mean_profit() const {
    double s = 0.0;
    for (const EpisodeMetrics& m : episodes) s += m.profit;
    return episodes.empty() ? 0.0 : s / episodes.size();
  }
  double mean(double (EpisodeMetrics::*f)() const) const {
    double s = 0.0;
    for (const EpisodeMetrics& m : episodes) s += (m.*f)();
    return episodes.empty() ? 0.0 : s / episodes.size();
  }
};

// Runs the policy over every episode and gathers the reported metrics: mean
// profit, the two reject shares, mean pick-up distance (in zone hops) and
// mean waiting time at pickup.
inline EvaluationResult evaluate_policy(
    const FleetSim& sim, const WeightPolicy& policy,
    const std::vector<const Episode*>& episodes, int fleet_size, int f_max) {
  const OperatingGraph& g = sim.graph();
  EvaluationResult res;
  for (const Episode* ep : episodes) {
    EpisodeMetrics m;
    m.label = ep->date;
    StepObserver obs = [&](const SystemState& s,
                           const std::vector<Request>& slots,
                           const CoordinatedAction& act,
                           const StepOutcome& out) {
      const ZoneOccupancy occ = zone_occupancy(s, g);
      const int customers = sim.customer_count(s);
      m.requests += customers;
      for (int i = 0; i < customers; ++i) {
        const Request& r = slots[i];
        if (act.per_request[i] == 0) {
          const double fare = sim.params().pricing.fare(g, r);
          const double trip_cost = sim.params().pricing.cost_per_km *
              g.shortest_route(r.origin, r.destination).dist_m / 1000.0;
          if (fare > trip_cost) {
            if (occ.at(r.destination) == 0)
              ++m.rejects_empty;
            else
              ++m.rejects_occupied;
          }
        } else {
          const Vehicle& k = s.vehicles[act.per_request[i] - 1];
          m.pickup_dist_zones_sum +=
              g.shortest_route(end_position(k), r.origin).dist_m /
              g.min_edge_m();
        }
      }
      for (int wsteps : out.pickup_waits) m.wait_steps_sum += wsteps;
      m.served += out.served;
    };
    const EpisodeResult r =
        run_episode(sim, policy, ep->batches, fleet_size, f_max, obs);
    m.profit = r.profit;
    res.episodes.push_back(std::move(m));
  }
  return res;
}

inline void write_metrics_csv(const EvaluationResult& res,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "episode,profit,rejects_empty_pct,rejects_occupied_pct,"
         "pickup_dist_zones,wait_min\n";
  for (const EpisodeMetrics& m : res.episodes)
    out << m.label << ',' << m.profit << ',' << m.rejects_empty_pct() << ','
        << m.rejects_occupied_pct() << ',' << m.mean_pickup_dist_zones() << ','
        << m.mean_wait_min() << "\n";
}

}  // namespace amod
