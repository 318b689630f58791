#pragma once

// Hexagonal operating-area graph: zones, edges, all-pairs shortest routes
// and coordinate-to-zone mapping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace amod {

using ZoneId = int;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Axial hex coordinates (pointy-top, see redblobgames.com/grids/hexagons).
struct HexCoord {
  int q = 0;
  int r = 0;
};

struct Zone {
  ZoneId id = 0;
  HexCoord axial;
  LatLon center;
};

struct GraphEdge {
  ZoneId a = 0;
  ZoneId b = 0;
  double dist_m = 0.0;
  int steps = 0;
};

struct RouteInfo {
  double dist_m = 0.0;
  int steps = 0;
  ZoneId first_hop = 0;
};

inline double haversine_m(const LatLon& a, const LatLon& b) {
  constexpr double kEarthRadiusM = 6371000.0;
  constexpr double kDeg = M_PI / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(s)));
}

// Immutable after construction; safe for concurrent reads.
class OperatingGraph {
 public:
  static OperatingGraph build_hex_grid(int zone_count, double edge_distance_m,
                                       int edge_steps, LatLon anchor) {
    if (zone_count < 2 || edge_distance_m <= 0.0 || edge_steps < 1)
      throw std::invalid_argument("build_hex_grid: non-positive parameters");

    std::vector<Zone> zones;
    zones.reserve(zone_count);
    for (const HexCoord& h : spiral(zone_count)) {
      Zone z;
      z.id = static_cast<ZoneId>(zones.size());
      z.axial = h;
      z.center = axial_to_latlon(h, edge_distance_m, anchor);
      zones.push_back(z);
    }
    std::vector<GraphEdge> edges;
    for (int i = 0; i < zone_count; ++i)
      for (int j = i + 1; j < zone_count; ++j)
        if (axial_distance(zones[i].axial, zones[j].axial) == 1)
          edges.push_back({i, j, edge_distance_m, edge_steps});
    return OperatingGraph(std::move(zones), std::move(edges));
  }

  OperatingGraph(std::vector<Zone> zones, std::vector<GraphEdge> edges)
      : zones_(std::move(zones)), edges_(std::move(edges)) {
    if (zones_.size() < 2) throw std::invalid_argument("graph needs >= 2 zones");
    adj_.assign(zones_.size(), {});
    for (const GraphEdge& e : edges_) {
      check_zone(e.a);
      check_zone(e.b);
      if (e.a == e.b) throw std::invalid_argument("self-loop edge");
      adj_[e.a].push_back({e.b, e.dist_m, e.steps});
      adj_[e.b].push_back({e.a, e.dist_m, e.steps});
    }
    for (auto& nbrs : adj_)
      std::sort(nbrs.begin(), nbrs.end(),
                [](const Half& x, const Half& y) { return x.to < y.to; });
    compute_shortest();
  }

  int zone_count() const { return static_cast<int>(zones_.size()); }
  const std::vector<Zone>& zones() const { return zones_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const Zone& zone(ZoneId v) const {
    check_zone(v);
    return zones_[v];
  }

  std::vector<ZoneId> neighbors(ZoneId v) const {
    check_zone(v);
    std::vector<ZoneId> out;
    out.reserve(adj_[v].size());
    for (const Half& h : adj_[v]) out.push_back(h.to);
    return out;
  }

  RouteInfo shortest_route(ZoneId from, ZoneId to) const {
    check_zone(from);
    check_zone(to);
    return table_[from * zone_count() + to];
  }

  // Zone whose center is nearest by great-circle distance; ties -> lowest id.
  ZoneId map_coordinate(double lat, double lon) const {
    if (!std::isfinite(lat) || !std::isfinite(lon))
      throw std::invalid_argument("map_coordinate: non-finite coordinates");
    ZoneId best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const Zone& z : zones_) {
      const double d = haversine_m({lat, lon}, z.center);
      if (d < best_d - 1e-9) {
        best_d = d;
        best = z.id;
      }
    }
    return best;
  }

  // Normalized axial indices in [0,1]^2; distinct zones never collide.
  std::pair<double, double> normalized_axial(ZoneId v) const {
    check_zone(v);
    const auto& h = zones_[v].axial;
    const double dq = (q_max_ > q_min_) ? double(q_max_ - q_min_) : 1.0;
    const double dr = (r_max_ > r_min_) ? double(r_max_ - r_min_) : 1.0;
    return {(h.q - q_min_) / dq, (h.r - r_min_) / dr};
  }

  double max_distance_m() const { return max_dist_m_; }
  int max_steps() const { return max_steps_; }
  double min_edge_m() const { return min_edge_m_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["zones"] = nlohmann::json::array();
    for (const Zone& z : zones_)
      j["zones"].push_back({{"id", z.id},
                            {"q", z.axial.q},
                            {"r", z.axial.r},
                            {"lat", z.center.lat},
                            {"lon", z.center.lon}});
    j["edges"] = nlohmann::json::array();
    for (const GraphEdge& e : edges_)
      j["edges"].push_back(
          {{"a", e.a}, {"b", e.b}, {"dist_m", e.dist_m}, {"steps", e.steps}});
    return j;
  }

  static OperatingGraph from_json(const nlohmann::json& j) {
    std::vector<Zone> zones;
    for (const auto& zj : j.at("zones")) {
      Zone z;
      z.id = zj.at("id").get<int>();
      z.axial = {zj.at("q").get<int>(), zj.at("r").get<int>()};
      z.center = {zj.at("lat").get<double>(), zj.at("lon").get<double>()};
      zones.push_back(z);
    }
    std::sort(zones.begin(), zones.end(),
              [](const Zone& a, const Zone& b) { return a.id < b.id; });
    std::vector<GraphEdge> edges;
    for (const auto& ej : j.at("edges"))
      edges.push_back({ej.at("a").get<int>(), ej.at("b").get<int>(),
                       ej.at("dist_m").get<double>(), ej.at("steps").get<int>()});
    return OperatingGraph(std::move(zones), std::move(edges));
  }

 private:
  struct Half {
    ZoneId to;
    double dist_m;
    int steps;
  };

  void check_zone(ZoneId v) const {
    if (v < 0 || v >= static_cast<int>(zones_.size()))
      throw std::out_of_range("unknown zone " + std::to_string(v));
  }

  static int axial_distance(const HexCoord& a, const HexCoord& b) {
    const int dq = a.q - b.q, dr = a.r - b.r;
    return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
  }

  static LatLon axial_to_latlon(const HexCoord& h, double d, LatLon anchor) {
    constexpr double kMetersPerDegLat = 111320.0;
    const double east = d * (h.q + h.r / 2.0);
    const double north = -d * (std::sqrt(3.0) / 2.0) * h.r;
    LatLon p;
    p.lat = anchor.lat + north / kMetersPerDegLat;
    p.lon = anchor.lon +
            east / (kMetersPerDegLat * std::cos(anchor.lat * M_PI / 180.0));
    return p;
  }

  // Concentric-ring enumeration from the anchor zone.
  static std::vector<HexCoord> spiral(int count) {
    static const int dq[6] = {1, 1, 0, -1, -1, 0};
    static const int dr[6] = {0, -1, -1, 0, 1, 1};
    std::vector<HexCoord> out;
    out.push_back({0, 0});
    for (int ring = 1; static_cast<int>(out.size()) < count; ++ring) {
      HexCoord c{-ring, ring};  // ring start: ring * direction SW
      for (int dir = 0; dir < 6 && static_cast<int>(out.size()) < count; ++dir)
        for (int s = 0; s < ring && static_cast<int>(out.size()) < count; ++s) {
          out.push_back(c);
          c.q += dq[dir];
          c.r += dr[dir];
        }
    }
    return out;
  }

  // Lexicographic (distance, steps) Dijkstra per source, then first hops.
  void compute_shortest() {
    const int n = zone_count();
    const double inf = std::numeric_limits<double>::infinity();
    table_.assign(static_cast<size_t>(n) * n, RouteInfo{inf, 0, -1});
    for (int s = 0; s < n; ++s) {
      std::vector<double> dist(n, inf);
      std::vector<int> steps(n, std::numeric_limits<int>::max());
      using Item = std::tuple<double, int, int>;  // dist, steps, node
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      dist[s] = 0.0;
      steps[s] = 0;
      pq.push({0.0, 0, s});
      while (!pq.empty()) {
        auto [d, st, u] = pq.top();
        pq.pop();
        if (d > dist[u] || (d == dist[u] && st > steps[u])) continue;
        for (const Half& h : adj_[u]) {
          const double nd = d + h.dist_m;
          const int ns = st + h.steps;
          if (nd < dist[h.to] || (nd == dist[h.to] && ns < steps[h.to])) {
            dist[h.to] = nd;
            steps[h.to] = ns;
            pq.push({nd, ns, h.to});
          }
        }
      }
      for (int t = 0; t < n; ++t) {
        if (dist[t] == inf)
          throw std::invalid_argument("graph is not connected");
        table_[s * n + t] = RouteInfo{dist[t], steps[t], t == s ? s : -1};
      }
    }
    // first_hop(s,t): prefer the direct edge, otherwise smallest neighbor id
    // on a lexicographically optimal route.
    for (int s = 0; s < n; ++s)
      for (int t = 0; t < n; ++t) {
        if (s == t) continue;
        RouteInfo& ri = table_[s * n + t];
        for (const Half& h : adj_[s]) {
          const RouteInfo& rest = table_[h.to * n + t];
          if (h.dist_m + rest.dist_m == ri.dist_m &&
              h.steps + rest.steps == ri.steps) {
            if (h.to == t) {
              ri.first_hop = t;
              break;
            }
            if (ri.first_hop < 0) ri.first_hop = h.to;
          }
        }
      }
    max_dist_m_ = 0.0;
    max_steps_ = 0;
    for (const RouteInfo& ri : table_) {
      max_dist_m_ = std::max(max_dist_m_, ri.dist_m);
      max_steps_ = std::max(max_steps_, ri.steps);
    }
    min_edge_m_ = inf;
    for (const GraphEdge& e : edges_) min_edge_m_ = std::min(min_edge_m_, e.dist_m);
    q_min_ = r_min_ = std::numeric_limits<int>::max();
    q_max_ = r_max_ = std::numeric_limits<int>::min();
    for (const Zone& z : zones_) {
      q_min_ = std::min(q_min_, z.axial.q);
      q_max_ = std::max(q_max_, z.axial.q);
      r_min_ = std::min(r_min_, z.axial.r);
      r_max_ = std::max(r_max_, z.axial.r);
    }
  }

  std::vector<Zone> zones_;
  std::vector<GraphEdge> edges_;
  std::vector<std::vector<Half>> adj_;
  std::vector<RouteInfo> table_;
  double max_dist_m_ = 0.0;
  int max_steps_ = 0;
  double min_edge_m_ = 0.0;
  int q_min_ = 0, q_max_ = 0, r_min_ = 0, r_max_ = 0;
};

}  // namespace amod
