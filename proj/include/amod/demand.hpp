#pragma once

// Episode demand streams: taxi-record ingestion, the clustered synthetic
// variant, a pure synthetic generator, and train/validation/test splits.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "amod/geo.hpp"
#include "amod/state.hpp"

namespace amod {

struct TripRecord {
  std::string date;     // YYYY-MM-DD
  int minute_of_day = 0;
  ZoneId pickup_zone = 0;
  ZoneId dropoff_zone = 0;
};

struct IngestResult {
  std::vector<TripRecord> trips;
  int dropped_outside = 0;
  int dropped_same_zone = 0;
  int malformed = 0;
};

enum class Split { train, val, test };

struct Episode {
  std::string date;
  Split split = Split::train;
  std::vector<std::vector<Request>> batches;  // one per time step
};

struct EpisodeSet {
  std::vector<Episode> episodes;

  std::vector<const Episode*> split(Split s) const {
    std::vector<const Episode*> out;
    for (const Episode& e : episodes)
      if (e.split == s) out.push_back(&e);
    return out;
  }
};

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline int weekday(int y, int m, int d) {  // 0 = Sunday (Sakamoto)
  static const int t[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
  if (m < 3) y -= 1;
  return (y + y / 4 - y / 100 + y / 400 + t[m - 1] + d) % 7;
}

}  // namespace detail

inline const std::vector<std::string>& us_federal_holidays_2015() {
  static const std::vector<std::string> kDays = {
      "2015-01-01", "2015-01-19", "2015-02-16", "2015-05-25", "2015-07-03",
      "2015-09-07", "2015-10-12", "2015-11-11", "2015-11-26", "2015-12-25"};
  return kDays;
}

// Parses a yellow-taxi CSV stream and maps coordinates to zones. Rows outside
// the operating area (farther than one edge length from every zone center) or
// mapping to equal zones are dropped.
inline IngestResult ingest_trips(std::istream& in, const OperatingGraph& g) {
  if (!in) throw std::runtime_error("ingest_trips: unreadable stream");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("ingest_trips: missing header");
  const std::vector<std::string> header = detail::split_csv_line(line);
  int c_time = -1, c_plon = -1, c_plat = -1, c_dlon = -1, c_dlat = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    std::string h = detail::lower(header[i]);
    h.erase(std::remove_if(h.begin(), h.end(), ::isspace), h.end());
    if (h == "tpep_pickup_datetime") c_time = static_cast<int>(i);
    else if (h == "pickup_longitude") c_plon = static_cast<int>(i);
    else if (h == "pickup_latitude") c_plat = static_cast<int>(i);
    else if (h == "dropoff_longitude") c_dlon = static_cast<int>(i);
    else if (h == "dropoff_latitude") c_dlat = static_cast<int>(i);
  }
  if (c_time < 0 || c_plon < 0 || c_plat < 0 || c_dlon < 0 || c_dlat < 0)
    throw std::runtime_error("ingest_trips: required columns missing");

  const double outside_m = g.min_edge_m();
  IngestResult res;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    const int needed = std::max({c_time, c_plon, c_plat, c_dlon, c_dlat});
    if (static_cast<int>(f.size()) <= needed) {
      ++res.malformed;
      continue;
    }
    int yy, mo, dd, hh, mi, ss;
    if (std::sscanf(f[c_time].c_str(), "%d-%d-%d %d:%d:%d", &yy, &mo, &dd, &hh,
                    &mi, &ss) != 6) {
      ++res.malformed;
      continue;
    }
    double plat, plon, dlat, dlon;
    try {
      plat = std::stod(f[c_plat]);
      plon = std::stod(f[c_plon]);
      dlat = std::stod(f[c_dlat]);
      dlon = std::stod(f[c_dlon]);
    } catch (const std::exception&) {
      ++res.malformed;
      continue;
    }
    if (!std::isfinite(plat) || !std::isfinite(plon) || !std::isfinite(dlat) ||
        !std::isfinite(dlon)) {
      ++res.malformed;
      continue;
    }
    const ZoneId pz = g.map_coordinate(plat, plon);
    const ZoneId dz = g.map_coordinate(dlat, dlon);
    if (haversine_m({plat, plon}, g.zone(pz).center) > outside_m ||
        haversine_m({dlat, dlon}, g.zone(dz).center) > outside_m) {
      ++res.dropped_outside;
      continue;
    }
    if (pz == dz) {
      ++res.dropped_same_zone;
      continue;
    }
    TripRecord tr;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", yy, mo, dd);
    tr.date = buf;
    tr.minute_of_day = hh * 60 + mi;
    tr.pickup_zone = pz;
    tr.dropoff_zone = dz;
    res.trips.push_back(std::move(tr));
  }
  return res;
}

struct EpisodeBuildConfig {
  int window_start_min = 8 * 60 + 30;  // 08:30
  int horizon = 60;                    // one-minute steps
  int downscale = 1;                   // keep every n-th trip in placement order
  int batch_cap = 1000;                // earliest-placed requests kept
  int train_count = 200;
  int val_count = 25;
  int test_count = 20;
  std::vector<std::string> holidays = us_federal_holidays_2015();
};

// Daily one-hour episodes from trip records, weekends and holidays excluded,
// split chronologically into train/val/test.
inline EpisodeSet build_episodes(const std::vector<TripRecord>& trips,
                                 const EpisodeBuildConfig& cfg) {
  if (cfg.downscale < 1 || cfg.batch_cap < 1 || cfg.horizon < 1)
    throw std::invalid_argument("build_episodes: invalid config");
  if (trips.empty()) throw std::invalid_argument("build_episodes: empty input");

  std::map<std::string, std::vector<const TripRecord*>> by_date;
  for (const TripRecord& tr : trips) {
    if (tr.minute_of_day < cfg.window_start_min ||
        tr.minute_of_day >= cfg.window_start_min + cfg.horizon)
      continue;
    int y, m, d;
    if (std::sscanf(tr.date.c_str(), "%d-%d-%d", &y, &m, &d) != 3) continue;
    const int wd = detail::weekday(y, m, d);
    if (wd == 0 || wd == 6) continue;
    if (std::find(cfg.holidays.begin(), cfg.holidays.end(), tr.date) !=
        cfg.holidays.end())
      continue;
    by_date[tr.date].push_back(&tr);
  }
  if (by_date.empty()) throw std::invalid_argument("build_episodes: no usable dates");

  EpisodeSet set;
  for (auto& [date, rows] : by_date) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const TripRecord* a, const TripRecord* b) {
                       return a->minute_of_day < b->minute_of_day;
                     });
    Episode ep;
    ep.date = date;
    ep.batches.assign(cfg.horizon, {});
    int idx = 0;
    for (const TripRecord* tr : rows) {
      if (idx++ % cfg.downscale != 0) continue;
      const int t = tr->minute_of_day - cfg.window_start_min;
      if (static_cast<int>(ep.batches[t].size()) >= cfg.batch_cap) continue;
      ep.batches[t].push_back(
          Request::customer_req(tr->pickup_zone, tr->dropoff_zone, t));
    }
    set.episodes.push_back(std::move(ep));
  }
  const int n = static_cast<int>(set.episodes.size());
  for (int i = 0; i < n; ++i) {
    if (i < cfg.train_count)
      set.episodes[i].split = Split::train;
    else if (i < cfg.train_count + cfg.val_count)
      set.episodes[i].split = Split::val;
    else if (i < cfg.train_count + cfg.val_count + cfg.test_count)
      set.episodes[i].split = Split::test;
    else
      set.episodes[i].split = Split::test;
  }
  return set;
}

struct ClusterSpec {
  std::vector<ZoneId> pickup_centers;
  double pickup_spread = 0.5;   // std-dev in axial units around a center
  double dropoff_spread = 0.5;  // std-dev around a boundary zone
};

namespace detail {

inline ZoneId nearest_zone_axial(const OperatingGraph& g, double q, double r) {
  ZoneId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Zone& z : g.zones()) {
    const double dq = z.axial.q - q, dr = z.axial.r - r;
    const double d = dq * dq + dr * dr + (dq + dr) * (dq + dr);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = z.id;
    }
  }
  return best;
}

inline std::vector<ZoneId> boundary_zones(const OperatingGraph& g) {
  std::vector<ZoneId> out;
  for (const Zone& z : g.zones())
    if (g.neighbors(z.id).size() < 6) out.push_back(z.id);
  if (out.empty()) out.push_back(g.zone_count() - 1);
  return out;
}

}  // namespace detail

// Relabels pick-up and drop-off locations of base episodes: pickups cluster
// around the given centers, dropoffs gravitate toward the area's edge.
// Timestamps and request counts are preserved.
inline EpisodeSet generate_clustered(const EpisodeSet& base,
                                     const ClusterSpec& spec,
                                     const OperatingGraph& g,
                                     std::uint64_t seed) {
  if (spec.pickup_centers.empty() || spec.pickup_spread < 0.0 ||
      spec.dropoff_spread < 0.0 || g.zone_count() < 2)
    throw std::invalid_argument("generate_clustered: invalid cluster spec");
  for (ZoneId c : spec.pickup_centers) g.zone(c);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const std::vector<ZoneId> edge = detail::boundary_zones(g);

  EpisodeSet out;
  for (const Episode& ep : base.episodes) {
    Episode ne;
    ne.date = ep.date;
    ne.split = ep.split;
    ne.batches.resize(ep.batches.size());
    for (size_t t = 0; t < ep.batches.size(); ++t) {
      for (size_t i = 0; i < ep.batches[t].size(); ++i) {
        const ZoneId center =
            spec.pickup_centers[rng() % spec.pickup_centers.size()];
        const auto ch = g.zone(center).axial;
        const ZoneId o = detail::nearest_zone_axial(
            g, ch.q + jitter(rng) * spec.pickup_spread,
            ch.r + jitter(rng) * spec.pickup_spread);
        ZoneId d = o;
        for (int attempt = 0; d == o; ++attempt) {
          if (attempt > 1000)
            throw std::invalid_argument(
                "generate_clustered: degenerate spec, cannot separate zones");
          const ZoneId e = edge[rng() % edge.size()];
          const auto eh = g.zone(e).axial;
          d = detail::nearest_zone_axial(
              g, eh.q + jitter(rng) * spec.dropoff_spread,
              eh.r + jitter(rng) * spec.dropoff_spread);
        }
        ne.batches[t].push_back(
            Request::customer_req(o, d, static_cast<int>(t)));
      }
    }
    out.episodes.push_back(std::move(ne));
  }
  return out;
}

// Poisson-count batches with origin/destination uniform over distinct pairs.
inline EpisodeSet generate_synthetic(double rate, const OperatingGraph& g,
                                     int horizon, int episodes,
                                     std::uint64_t seed,
                                     int train_count = -1, int val_count = 0) {
  if (rate < 0.0) throw std::invalid_argument("generate_synthetic: negative rate");
  if (train_count < 0) train_count = episodes;
  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> counts(rate);
  std::uniform_int_distribution<int> zone(0, g.zone_count() - 1);
  EpisodeSet set;
  for (int e = 0; e < episodes; ++e) {
    Episode ep;
    ep.date = "synthetic-" + std::to_string(e);
    ep.split = e < train_count
                   ? Split::train
                   : (e < train_count + val_count ? Split::val : Split::test);
    ep.batches.resize(horizon);
    for (int t = 0; t < horizon; ++t) {
      const int n = rate == 0.0 ? 0 : counts(rng);
      for (int i = 0; i < n; ++i) {
        const ZoneId o = zone(rng);
        ZoneId d = zone(rng);
        while (d == o) d = zone(rng);
        ep.batches[t].push_back(Request::customer_req(o, d, t));
      }
    }
    set.episodes.push_back(std::move(ep));
  }
  return set;
}

// Caps every batch to the given size, keeping the earliest-placed requests.
inline EpisodeSet cap_batches(EpisodeSet set, int cap) {
  for (Episode& ep : set.episodes)
    for (auto& batch : ep.batches)
      if (static_cast<int>(batch.size()) > cap) batch.resize(cap);
  return set;
}

// Mean cumulative request count per time step over the training split, used
// by the observed-vs-average demand feature. Validation and test reuse it.
inline std::vector<double> cumulative_average_counts(const EpisodeSet& set,
                                                     int horizon) {
  std::vector<double> avg(horizon, 0.0);
  int n = 0;
  for (const Episode& ep : set.episodes) {
    if (ep.split != Split::train) continue;
    ++n;
    double cum = 0.0;
    for (int t = 0; t < horizon && t < static_cast<int>(ep.batches.size()); ++t) {
      cum += static_cast<double>(ep.batches[t].size());
      avg[t] += cum;
    }
  }
  if (n > 0)
    for (double& a : avg) a /= n;
  return avg;
}

// JSONL cache: one line per episode.
inline void save_episodes_jsonl(const EpisodeSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Episode& ep : set.episodes) {
    nlohmann::json j;
    j["date"] = ep.date;
    j["split"] = ep.split == Split::train ? "train"
                 : ep.split == Split::val ? "val"
                                          : "test";
    j["batches"] = nlohmann::json::array();
    for (const auto& batch : ep.batches) {
      nlohmann::json bj = nlohmann::json::array();
      for (const Request& r : batch)
        bj.push_back({{"o", r.origin}, {"d", r.destination}, {"t", r.placed_at}});
      j["batches"].push_back(bj);
    }
    out << j.dump() << "\n";
  }
}

inline EpisodeSet load_episodes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  EpisodeSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    Episode ep;
    ep.date = j.at("date").get<std::string>();
    const std::string sp = j.at("split").get<std::string>();
    ep.split = sp == "train" ? Split::train : sp == "val" ? Split::val : Split::test;
    for (const auto& bj : j.at("batches")) {
      std::vector<Request> batch;
      for (const auto& rj : bj)
        batch.push_back(Request::customer_req(rj.at("o").get<int>(),
                                              rj.at("d").get<int>(),
                                              rj.at("t").get<int>()));
      ep.batches.push_back(std::move(batch));
    }
    set.episodes.push_back(std::move(ep));
  }
  return set;
}

}  // namespace amod
