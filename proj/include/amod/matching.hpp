#pragma once

// Per-vehicle weight masking and the maximum-weight bipartite assignment that
// turns per-agent request weights into one coordinated fleet action.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace amod {

// Rows are vehicles, columns 0..slots: column 0 is the reject entry, columns
// 1..slots are request slots (padding included).
struct WeightMatrix {
  int vehicles = 0;
  int slots = 0;  // F_max
  std::vector<double> w;
  std::vector<std::uint8_t> active_reject;

  WeightMatrix() = default;
  WeightMatrix(int k, int f_max)
      : vehicles(k),
        slots(f_max),
        w(static_cast<size_t>(k) * (f_max + 1), 0.0),
        active_reject(k, 0) {}

  double& at(int j, int i) { return w[static_cast<size_t>(j) * (slots + 1) + i]; }
  double at(int j, int i) const {
    return w[static_cast<size_t>(j) * (slots + 1) + i];
  }
  double threshold() const { return 1.0 / (slots + 1); }
};

struct MaskContext {
  int active_requests = 0;                      // F_t (non-padding slots)
  std::vector<std::uint8_t> buffer2_occupied;   // per vehicle
  std::function<bool(int vehicle, int slot)> feasible;  // slot in [0, F_t)
};

// Per-vehicle masking: a buffer2-occupied vehicle is zeroed with a passive
// reject; otherwise weights at or below 1/(F_max+1) and infeasible pairs are
// zeroed, and the vehicle actively rejects iff nothing survives.
inline WeightMatrix mask(const WeightMatrix& in, const MaskContext& ctx) {
  WeightMatrix out(in.vehicles, in.slots);
  const double delta = in.threshold();
  for (int j = 0; j < in.vehicles; ++j) {
    if (ctx.buffer2_occupied[j]) {
      out.active_reject[j] = 0;
      continue;
    }
    double surviving = 0.0;
    for (int i = 0; i < ctx.active_requests; ++i) {
      const double v = in.at(j, i + 1);
      if (v > delta && ctx.feasible(j, i)) {
        out.at(j, i + 1) = v;
        surviving += v;
      }
    }
    out.active_reject[j] = surviving == 0.0 ? 1 : 0;
  }
  return out;
}

struct CoordinatedAction {
  // a_i: 0 = reject, otherwise 1-based vehicle index; one entry per slot.
  std::vector<int> per_request;
  // ā_j: 0-based request slot, or -1 for reject.
  std::vector<int> per_vehicle;
  std::vector<std::uint8_t> active_reject;  // carried over from masking
  double total_weight = 0.0;

  bool assigned(int vehicle) const { return per_vehicle[vehicle] >= 0; }
};

namespace detail {

// Jonker-Volgenant style potentials on the square cost matrix (O(n^3)).
// Returns row -> column assignment minimizing total cost.
inline std::vector<int> hungarian_min(const std::vector<double>& cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

// Maximum-weight assignment over the masked matrix; zero-weight pairs are
// never matched, unmatched requests are rejected.
inline CoordinatedAction solve_assignment(const WeightMatrix& masked) {
  const int k = masked.vehicles;
  const int f = masked.slots;
  CoordinatedAction act;
  act.per_request.assign(f, 0);
  act.per_vehicle.assign(k, -1);
  act.active_reject = masked.active_reject;
  if (k == 0 || f == 0) return act;

  const int n = std::max(k, f);
  std::vector<double> cost(static_cast<size_t>(n) * n, 0.0);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < f; ++i) {
      const double v = masked.at(j, i + 1);
      if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument("solve_assignment: weights must be finite and >= 0");
      cost[static_cast<size_t>(j) * n + i] = -v;
    }
  const std::vector<int> row_to_col = detail::hungarian_min(cost, n);
  for (int j = 0; j < k; ++j) {
    const int i = row_to_col[j];
    if (i < 0 || i >= f) continue;
    const double v = masked.at(j, i + 1);
    if (v <= 0.0) continue;
    act.per_vehicle[j] = i;
    act.per_request[i] = j + 1;
    act.total_weight += v;
  }
  return act;
}

}  // namespace amod
