#pragma once

// MDP domain types shared by the simulator, the rebalancing logic and the
// learners.

#include <optional>
#include <stdexcept>
#include <vector>

#include "amod/geo.hpp"

namespace amod {

enum class RequestKind { customer, rebalancing };

struct Request {
  RequestKind kind = RequestKind::customer;
  int waiting = 0;       // elapsed steps since placement; unused for rebalancing
  bool onboard = false;  // customer picked up (waiting clock stopped)
  ZoneId origin = 0;
  ZoneId destination = 0;
  int placed_at = 0;

  bool is_rebalancing() const { return kind == RequestKind::rebalancing; }

  static Request customer_req(ZoneId o, ZoneId d, int placed_at) {
    if (o == d) throw std::invalid_argument("customer request with origin == destination");
    Request r;
    r.kind = RequestKind::customer;
    r.origin = o;
    r.destination = d;
    r.placed_at = placed_at;
    return r;
  }

  static Request rebalancing_req(ZoneId zone) {
    Request r;
    r.kind = RequestKind::rebalancing;
    r.origin = zone;
    r.destination = zone;
    return r;
  }
};

// Buffer fills FIFO: buffer2 occupied implies buffer1 occupied.
// Idle <=> buffer1 empty; idle => steps_to_position == 0.
struct Vehicle {
  ZoneId position = 0;        // current vertex, or next vertex while traveling
  int steps_to_position = 0;  // tau
  std::optional<Request> buffer1;
  std::optional<Request> buffer2;

  bool idle() const { return !buffer1.has_value(); }
  int buffered() const { return (buffer1 ? 1 : 0) + (buffer2 ? 1 : 0); }
};

struct SystemState {
  int t = 0;
  int horizon = 0;  // T
  std::vector<Vehicle> vehicles;
  std::vector<Request> customer_requests;  // C_t

  int fleet_size() const { return static_cast<int>(vehicles.size()); }
};

struct StepOutcome {
  double revenue = 0.0;
  double cost = 0.0;
  std::vector<double> per_agent_reward;  // r_j, revenue minus cost, no shaping
  int served = 0;
  int rejected = 0;
  // waiting time (steps) at pickup for requests served this step
  std::vector<int> pickup_waits;

  double profit() const { return revenue - cost; }
};

struct Pricing {
  double rev_per_km = 5.0;
  double cost_per_km = 2.0;

  double fare(const OperatingGraph& g, const Request& r) const {
    return rev_per_km * g.shortest_route(r.origin, r.destination).dist_m / 1000.0;
  }
};

}  // namespace amod
