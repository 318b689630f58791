#pragma once

// The MDP engine: feasibility, pre- to post-decision transition, system
// dynamics and per-step revenue / cost / per-agent rewards.

#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "amod/geo.hpp"
#include "amod/matching.hpp"
#include "amod/rebalance.hpp"
#include "amod/state.hpp"

namespace amod {

struct SimParams {
  Pricing pricing;
  int max_waiting = 5;  // omega_max, in steps
  // When set, a vehicle may take a customer request only if its position or
  // final destination lies in the request's origin zone.
  bool origin_gate = false;
  bool rebalancing = false;
  RebalancingConfig reb;
};

class FleetSim {
 public:
  FleetSim(const OperatingGraph& g, SimParams params)
      : g_(&g), params_(std::move(params)) {
    params_.reb.min_edge_km = g.min_edge_m() / 1000.0;
  }

  const OperatingGraph& graph() const { return *g_; }
  const SimParams& params() const { return params_; }

  SystemState initial_state(int fleet_size, int horizon) const {
    SystemState s;
    s.t = 0;
    s.horizon = horizon;
    s.vehicles.resize(fleet_size);
    for (int j = 0; j < fleet_size; ++j)
      s.vehicles[j].position = j % g_->zone_count();
    return s;
  }

  // Global decision slots: the customer batch followed by one rebalancing
  // request per zone (when rebalancing is enabled).
  std::vector<Request> request_slots(const SystemState& s) const {
    std::vector<Request> slots = s.customer_requests;
    if (params_.rebalancing)
      for (ZoneId v = 0; v < g_->zone_count(); ++v)
        slots.push_back(Request::rebalancing_req(v));
    return slots;
  }

  int customer_count(const SystemState& s) const {
    return static_cast<int>(s.customer_requests.size());
  }

  bool feasible(const SystemState& s, const std::vector<Request>& slots, int i,
                int j) const {
    const Request& r = slots.at(i);
    const Vehicle& k = s.vehicles.at(j);
    if (r.is_rebalancing()) {
      return params_.rebalancing && k.idle() &&
             rebalance_feasible(params_.reb, *g_, k.position, r.destination);
    }
    if (k.buffer2) return false;
    if (params_.origin_gate &&
        k.position != r.origin && end_position(k) != r.origin)
      return false;
    return true;
  }

  MaskContext mask_context(const SystemState& s,
                           const std::vector<Request>& slots) const {
    MaskContext ctx;
    ctx.active_requests = static_cast<int>(slots.size());
    ctx.buffer2_occupied.resize(s.vehicles.size());
    for (size_t j = 0; j < s.vehicles.size(); ++j)
      ctx.buffer2_occupied[j] = s.vehicles[j].buffer2 ? 1 : 0;
    ctx.feasible = [this, &s, &slots](int j, int i) {
      return feasible(s, slots, i, j);
    };
    return ctx;
  }

  // Pre-decision -> post-decision: assigned requests appended FIFO, rejected
  // requests removed.
  SystemState apply_action(const SystemState& s,
                           const std::vector<Request>& slots,
                           const CoordinatedAction& a) const {
    SystemState out = s;
    for (int j = 0; j < s.fleet_size(); ++j) {
      const int i = a.per_vehicle[j];
      if (i < 0) continue;
      if (!feasible(s, slots, i, j))
        throw std::logic_error("apply_action: infeasible assignment");
      Vehicle& k = out.vehicles[j];
      if (!k.buffer1)
        k.buffer1 = slots[i];
      else
        k.buffer2 = slots[i];
    }
    out.customer_requests.clear();
    return out;
  }

  // One elapsed time step: pickups and revenue, movement along shortest
  // routes with per-edge departure costs, drop-offs, waiting-time updates,
  // and installation of the next customer batch.
  std::pair<SystemState, StepOutcome> advance(
      const SystemState& s_plus, std::vector<Request> next_batch) const {
    SystemState s = s_plus;
    StepOutcome out;
    out.per_agent_reward.assign(s.fleet_size(), 0.0);

    for (int j = 0; j < s.fleet_size(); ++j) {
      Vehicle& k = s.vehicles[j];

      // Pickup at the post-decision state; revenue only when on time.
      if (k.buffer1 && !k.buffer1->is_rebalancing() && !k.buffer1->onboard &&
          k.steps_to_position == 0 && k.position == k.buffer1->origin) {
        if (k.buffer1->waiting <= params_.max_waiting) {
          const double rev = params_.pricing.fare(*g_, *k.buffer1);
          out.revenue += rev;
          out.per_agent_reward[j] += rev;
        }
        ++out.served;
        out.pickup_waits.push_back(k.buffer1->waiting);
        k.buffer1->onboard = true;
      }

      // Movement: decrement mid-edge, otherwise depart onto the next edge of
      // the shortest route, charging the edge distance.
      if (k.buffer1) {
        if (k.steps_to_position > 0) {
          --k.steps_to_position;
        } else {
          const ZoneId target = leg_target(*k.buffer1);
          if (k.position != target) {
            const ZoneId hop = g_->shortest_route(k.position, target).first_hop;
            const RouteInfo edge = g_->shortest_route(k.position, hop);
            const double edge_cost =
                params_.pricing.cost_per_km * edge.dist_m / 1000.0;
            out.cost += edge_cost;
            out.per_agent_reward[j] -= edge_cost;
            k.position = hop;
            k.steps_to_position = edge.steps - 1;
          }
        }
      }

      // Drop-off: remove the finished request, shift buffer2 into buffer1.
      if (k.buffer1 && k.steps_to_position == 0 &&
          k.position == k.buffer1->destination &&
          (k.buffer1->onboard || k.buffer1->is_rebalancing())) {
        k.buffer1 = k.buffer2;
        k.buffer2.reset();
      }

      // Accepted but not yet served customers wait one more step.
      if (k.buffer1 && !k.buffer1->is_rebalancing() && !k.buffer1->onboard)
        ++k.buffer1->waiting;
      if (k.buffer2) ++k.buffer2->waiting;
    }

    s.t = s_plus.t + 1;
    s.customer_requests = std::move(next_batch);
    return {std::move(s), std::move(out)};
  }

 private:
  static ZoneId leg_target(const Request& r) {
    if (r.is_rebalancing() || r.onboard) return r.destination;
    return r.origin;
  }

  const OperatingGraph* g_;
  SimParams params_;
};

struct StepRecord {
  int t = 0;
  StepOutcome outcome;
  std::vector<int> per_request;  // assignment a_i per slot
};

struct EpisodeResult {
  double profit = 0.0;
  std::vector<StepRecord> trace;
};

// Callback invoked once per step with the pre-decision state, the decision
// slots, the coordinated action and the step outcome.
using StepObserver =
    std::function<void(const SystemState&, const std::vector<Request>&,
                       const CoordinatedAction&, const StepOutcome&)>;

/// Weight-producing policy: identical pre-masking semantics to the actor.
using WeightPolicy = std::function<WeightMatrix(
    const SystemState&, const std::vector<Request>& slots)>;

inline EpisodeResult run_episode(const FleetSim& sim, const WeightPolicy& policy,
                                 const std::vector<std::vector<Request>>& demand,
                                 int fleet_size, int f_max,
                                 const StepObserver& observer = {}) {
  const int horizon = static_cast<int>(demand.size());
  if (horizon < 1) throw std::invalid_argument("run_episode: empty demand");
  EpisodeResult result;
  SystemState state = sim.initial_state(fleet_size, horizon);
  state.customer_requests = demand[0];
  for (int t = 0; t < horizon; ++t) {
    const std::vector<Request> slots = sim.request_slots(state);
    if (static_cast<int>(slots.size()) > f_max)
      throw std::invalid_argument("run_episode: more slots than F_max");
    WeightMatrix wm = policy(state, slots);
    const WeightMatrix masked = mask(wm, sim.mask_context(state, slots));
    const CoordinatedAction act = solve_assignment(masked);
    const SystemState s_plus = sim.apply_action(state, slots, act);
    std::vector<Request> next =
        (t + 1 < horizon) ? demand[t + 1] : std::vector<Request>{};
    auto [next_state, outcome] = sim.advance(s_plus, std::move(next));
    for (int i = 0; i < sim.customer_count(state); ++i)
      if (act.per_request[i] == 0) ++outcome.rejected;
    if (observer) observer(state, slots, act, outcome);
    result.profit += outcome.profit();
    StepRecord rec;
    rec.t = t;
    rec.outcome = outcome;
    rec.per_request = act.per_request;
    result.trace.push_back(std::move(rec));
    state = std::move(next_state);
  }
  return result;
}

}  // namespace amod
