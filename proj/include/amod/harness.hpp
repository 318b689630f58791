#pragma once

// Experiment plumbing: INI configuration, instance/demand assembly from a
// config, run-artifact persistence and best-run selection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amod/demand.hpp"
#include "amod/policies.hpp"
#include "amod/sacd.hpp"
#include "amod/sim.hpp"

namespace amod {

// Flat INI: `[section]` headers plus `key = value` lines become
// "section.key" entries; `#` and `;` start comments.
class Config {
 public:
  static Config parse(std::istream& in) {
    Config cfg;
    std::string line, section;
    while (std::getline(in, line)) {
      const size_t hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: expected key=value, got: " + t);
      const std::string key = trim(t.substr(0, eq));
      const std::string val = trim(t.substr(eq + 1));
      cfg.values_[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  double num(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : std::stod(it->second);
  }
  long integer(const std::string& key, long dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : std::stol(it->second);
  }
  bool flag(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    return it->second == "true" || it->second == "1" || it->second == "yes" ||
           it->second == "on";
  }
  std::vector<int> int_list(const std::string& key,
                            std::vector<int> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) out.push_back(std::stoi(trim(item)));
    return out;
  }
  void set(const std::string& key, const std::string& val) {
    values_[key] = val;
  }
  const std::map<std::string, std::string>& entries() const { return values_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }
  std::map<std::string, std::string> values_;
};

struct ExperimentConfig {
  // instance
  int zones = 7;
  double edge_m = 459.0;
  int edge_steps = 2;
  int vehicles = 5;
  int request_cap = 6;
  int omega_max = 5;
  Pricing pricing;
  bool rebalancing = false;
  RebalanceVariant reb_variant = RebalanceVariant::all_but_own;
  bool shaping = true;
  LatLon anchor{40.7075, -74.0113};
  // demand
  std::string demand_source = "synthetic";  // synthetic | clustered | jsonl
  double demand_rate = 2.0;
  int horizon = 60;
  int episodes = 60;
  int train_count = 40;
  int val_count = 10;
  std::uint64_t demand_seed = 1;
  std::string demand_path;
  std::vector<int> cluster_centers = {0};
  double cluster_pickup_spread = 0.5;
  double cluster_dropoff_spread = 0.5;
  // learner
  Hyperparams hyper;
  NetTopology topology;
  std::vector<int> seeds = {1, 2, 3};
  HeuristicOptions heuristic;
  std::string out_dir = "out";

  int f_max() const { return request_cap + (rebalancing ? zones : 0); }
};

inline ExperimentConfig load_experiment(const Config& c) {
  ExperimentConfig e;
  e.zones = static_cast<int>(c.integer("instance.zones", e.zones));
  e.edge_m = c.num("instance.edge_m", e.edge_m);
  e.edge_steps = static_cast<int>(c.integer("instance.edge_steps", e.edge_steps));
  e.vehicles = static_cast<int>(c.integer("instance.vehicles", e.vehicles));
  e.request_cap = static_cast<int>(c.integer("instance.request_cap", e.request_cap));
  e.omega_max = static_cast<int>(c.integer("instance.omega_max", e.omega_max));
  e.pricing.rev_per_km = c.num("instance.rev_per_km", e.pricing.rev_per_km);
  e.pricing.cost_per_km = c.num("instance.cost_per_km", e.pricing.cost_per_km);
  e.rebalancing = c.flag("instance.rebalancing", e.rebalancing);
  const std::string var = c.str("instance.rebalance_variant", "all");
  e.reb_variant = var == "neighbors" ? RebalanceVariant::neighbors_only
                                     : RebalanceVariant::all_but_own;
  e.shaping = c.flag("instance.shaping", e.shaping);
  e.anchor.lat = c.num("instance.anchor_lat", e.anchor.lat);
  e.anchor.lon = c.num("instance.anchor_lon", e.anchor.lon);

  e.demand_source = c.str("demand.source", e.demand_source);
  e.demand_rate = c.num("demand.rate", e.demand_rate);
  e.horizon = static_cast<int>(c.integer("demand.horizon", e.horizon));
  e.episodes = static_cast<int>(c.integer("demand.episodes", e.episodes));
  e.train_count = static_cast<int>(c.integer("demand.train", e.train_count));
  e.val_count = static_cast<int>(c.integer("demand.val", e.val_count));
  e.demand_seed = static_cast<std::uint64_t>(c.integer("demand.seed", 1));
  e.demand_path = c.str("demand.path", "");
  e.cluster_centers = c.int_list("demand.cluster_centers", e.cluster_centers);
  e.cluster_pickup_spread =
      c.num("demand.pickup_spread", e.cluster_pickup_spread);
  e.cluster_dropoff_spread =
      c.num("demand.dropoff_spread", e.cluster_dropoff_spread);

  Hyperparams& h = e.hyper;
  h.gamma = c.num("train.gamma", h.gamma);
  h.alpha = c.num("train.alpha", h.alpha);
  h.alpha_final = c.num("train.alpha_final", h.alpha_final);
  h.batch = static_cast<int>(c.integer("train.batch", h.batch));
  h.lr = c.num("train.lr", h.lr);
  h.ema_rho = c.num("train.ema_rho", h.ema_rho);
  h.update_every = static_cast<int>(c.integer("train.update_every", h.update_every));
  h.total_steps = c.integer("train.total_steps", h.total_steps);
  h.warmup_steps = c.integer("train.warmup_steps", h.warmup_steps);
  h.noise_decay_steps = c.integer("train.noise_decay_steps", h.noise_decay_steps);
  h.noise_sigma0 = c.num("train.noise_sigma0", h.noise_sigma0);
  h.validate_every = c.integer("train.validate_every", h.validate_every);
  h.replay_capacity = static_cast<int>(
      c.integer("train.replay_capacity", h.replay_capacity));
  h.loss = c.str("train.loss", "coordinated") == "local" ? LossMode::local
                                                         : LossMode::coordinated;
  h.actor_uses_target_critics =
      c.flag("train.actor_uses_target_critics", h.actor_uses_target_critics);
  h.shuffle_inputs = c.flag("train.shuffle_inputs", h.shuffle_inputs);
  h.critic_sees_coordination =
      c.flag("train.critic_sees_coordination", h.critic_sees_coordination);

  e.topology.embedding =
      static_cast<int>(c.integer("net.embedding", e.topology.embedding));
  e.topology.trunk = c.int_list("net.trunk", e.topology.trunk);
  e.topology.head = c.int_list("net.head", e.topology.head);

  e.seeds = c.int_list("run.seeds", e.seeds);
  e.heuristic.inverse_distance =
      c.flag("heuristic.inverse_distance", e.heuristic.inverse_distance);
  e.out_dir = c.str("run.out", e.out_dir);
  if (const char* env = std::getenv("AMOD_OUT"))
    if (*env) e.out_dir = env;
  return e;
}

inline OperatingGraph build_graph(const ExperimentConfig& e) {
  return OperatingGraph::build_hex_grid(e.zones, e.edge_m, e.edge_steps, e.anchor);
}

inline SimParams sim_params(const ExperimentConfig& e) {
  SimParams p;
  p.pricing = e.pricing;
  p.max_waiting = e.omega_max;
  p.rebalancing = e.rebalancing;
  p.reb.variant = e.reb_variant;
  p.reb.shaping_enabled = e.shaping;
  p.reb.cost_magnitude_per_km = std::abs(e.pricing.cost_per_km);
  return p;
}

inline EpisodeSet build_demand(const ExperimentConfig& e,
                               const OperatingGraph& g) {
  EpisodeSet set;
  if (e.demand_source == "jsonl") {
    set = load_episodes_jsonl(e.demand_path);
  } else {
    set = generate_synthetic(e.demand_rate, g, e.horizon, e.episodes,
                             e.demand_seed, e.train_count, e.val_count);
    if (e.demand_source == "clustered") {
      ClusterSpec spec;
      spec.pickup_centers.assign(e.cluster_centers.begin(),
                                 e.cluster_centers.end());
      spec.pickup_spread = e.cluster_pickup_spread;
      spec.dropoff_spread = e.cluster_dropoff_spread;
      set = generate_clustered(set, spec, g, e.demand_seed + 1);
    }
  }
  return cap_batches(std::move(set), e.request_cap);
}

struct RunSummary {
  std::string label;
  int seed = 0;
  double val_profit = 0.0;
  double test_profit = 0.0;
};

inline void save_run_summary(const RunSummary& r, const std::string& path) {
  nlohmann::json j;
  j["label"] = r.label;
  j["seed"] = r.seed;
  j["val_profit"] = r.val_profit;
  j["test_profit"] = r.test_profit;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline RunSummary load_run_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  RunSummary r;
  r.label = j.at("label").get<std::string>();
  r.seed = j.at("seed").get<int>();
  r.val_profit = j.at("val_profit").get<double>();
  r.test_profit = j.at("test_profit").get<double>();
  return r;
}

// Best run by mean validation profit; ties break toward the lowest seed.
inline const RunSummary& select_best(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw std::invalid_argument("select_best: no runs");
  const RunSummary* best = &runs[0];
  for (const RunSummary& r : runs) {
    if (r.val_profit > best->val_profit ||
        (r.val_profit == best->val_profit && r.seed < best->seed))
      best = &r;
  }
  return *best;
}

}  // namespace amod
