// Command-line front end: demand ingestion, training, evaluation, baseline
// benchmarking, run comparison and a quick self-test.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "amod/harness.hpp"

namespace fs = std::filesystem;
using namespace amod;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string loss;
  std::string rebalance;
  int seed = -1;
};

ExperimentConfig resolve(const CommonArgs& args) {
  Config cfg = args.config.empty() ? Config{} : Config::parse_file(args.config);
  if (!args.loss.empty()) cfg.set("train.loss", args.loss);
  if (args.rebalance == "off") {
    cfg.set("instance.rebalancing", "false");
  } else if (args.rebalance == "all" || args.rebalance == "neighbors") {
    cfg.set("instance.rebalancing", "true");
    cfg.set("instance.rebalance_variant", args.rebalance);
  } else if (!args.rebalance.empty()) {
    throw std::runtime_error("--rebalance must be off|all|neighbors");
  }
  if (!args.out.empty()) cfg.set("run.out", args.out);
  return load_experiment(cfg);
}

void write_resolved(const ExperimentConfig& e, const std::string& path,
                    int seed) {
  std::ofstream out(path);
  out << "# resolved configuration\n";
  out << "instance.zones = " << e.zones << "\n";
  out << "instance.vehicles = " << e.vehicles << "\n";
  out << "instance.request_cap = " << e.request_cap << "\n";
  out << "instance.omega_max = " << e.omega_max << "\n";
  out << "instance.rebalancing = " << (e.rebalancing ? "true" : "false") << "\n";
  out << "train.loss = "
      << (e.hyper.loss == LossMode::local ? "local" : "coordinated") << "\n";
  out << "train.total_steps = " << e.hyper.total_steps << "\n";
  out << "train.alpha = " << e.hyper.alpha << "\n";
  out << "train.batch = " << e.hyper.batch << "\n";
  out << "run.seed = " << seed << "\n";
}

int cmd_ingest(const CommonArgs& args, const std::string& csv) {
  const ExperimentConfig e = resolve(args);
  const OperatingGraph g = build_graph(e);
  std::ifstream in(csv);
  if (!in) {
    std::cerr << "cannot read " << csv << "\n";
    return 1;
  }
  const IngestResult res = ingest_trips(in, g);
  EpisodeBuildConfig bc;
  bc.horizon = e.horizon;
  bc.batch_cap = e.request_cap;
  const EpisodeSet set = build_episodes(res.trips, bc);
  const std::string out =
      args.out.empty() ? "episodes.jsonl" : args.out;
  save_episodes_jsonl(set, out);
  std::cout << "trips kept: " << res.trips.size()
            << ", dropped outside: " << res.dropped_outside
            << ", dropped same-zone: " << res.dropped_same_zone
            << ", malformed: " << res.malformed << "\n";
  std::cout << "episodes: " << set.episodes.size() << " -> " << out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig e = resolve(args);
  const int seed = args.seed >= 0 ? args.seed : e.seeds.front();
  const OperatingGraph g = build_graph(e);
  const FleetSim sim(g, sim_params(e));
  const EpisodeSet data = build_demand(e, g);

  fs::create_directories(e.out_dir);
  const std::string label =
      e.hyper.loss == LossMode::local ? "local" : "coordinated";
  const std::string prefix =
      e.out_dir + "/" + label + "_seed" + std::to_string(seed);
  write_resolved(e, prefix + ".config.ini", seed);

  SacdLearner learner(sim, e.vehicles, e.f_max(), e.hyper, e.topology,
                      static_cast<std::uint64_t>(seed));
  std::ofstream log(prefix + ".curve.jsonl");
  const TrainResult tr = train(learner, data, e.vehicles, prefix, &log);

  // score the best checkpoint on the test split
  if (tr.best_val_step >= 0) learner.load_actor(prefix + ".actor.bin");
  const EvaluationResult test = evaluate_policy(
      sim, learner.evaluation_policy(), data.split(Split::test), e.vehicles,
      e.f_max());
  RunSummary sum;
  sum.label = label;
  sum.seed = seed;
  sum.val_profit = tr.best_val_profit;
  sum.test_profit = test.mean_profit();
  save_run_summary(sum, prefix + ".summary.json");
  write_metrics_csv(test, prefix + ".results.csv");
  std::cout << label << " seed " << seed << ": best val "
            << tr.best_val_profit << " (step " << tr.best_val_step
            << "), mean test profit " << sum.test_profit << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint,
                 const std::string& split) {
  const ExperimentConfig e = resolve(args);
  const OperatingGraph g = build_graph(e);
  const FleetSim sim(g, sim_params(e));
  const EpisodeSet data = build_demand(e, g);
  SacdLearner learner(sim, e.vehicles, e.f_max(), e.hyper, e.topology, 0);
  int horizon = 0;
  for (const Episode& ep : data.episodes)
    horizon = std::max(horizon, static_cast<int>(ep.batches.size()));
  learner.set_cumulative_average(cumulative_average_counts(data, horizon));
  learner.load_actor(checkpoint);
  const Split sp = split == "val" ? Split::val : Split::test;
  const EvaluationResult res =
      evaluate_policy(sim, learner.evaluation_policy(), data.split(sp),
                      e.vehicles, e.f_max());
  const std::string out = args.out.empty() ? "results.csv" : args.out;
  write_metrics_csv(res, out);
  std::cout << "mean profit (" << split << "): " << res.mean_profit() << " -> "
            << out << "\n";
  return 0;
}

int cmd_benchmark(const CommonArgs& args, const std::string& policy) {
  const ExperimentConfig e = resolve(args);
  const int seed = args.seed >= 0 ? args.seed : e.seeds.front();
  const OperatingGraph g = build_graph(e);
  const FleetSim sim(g, sim_params(e));
  const EpisodeSet data = build_demand(e, g);

  WeightPolicy pol;
  if (policy == "greedy") {
    pol = make_greedy_policy(sim, e.f_max());
  } else if (policy == "heuristic") {
    pol = make_heuristic_policy(sim, e.f_max(), e.heuristic);
  } else if (policy == "random") {
    pol = make_random_policy(
        e.f_max(),
        std::make_shared<std::mt19937_64>(static_cast<std::uint64_t>(seed)));
  } else {
    std::cerr << "--policy must be greedy|heuristic|random\n";
    return 1;
  }
  const EvaluationResult res = evaluate_policy(
      sim, pol, data.split(Split::test), e.vehicles, e.f_max());
  fs::create_directories(e.out_dir);
  const std::string prefix =
      e.out_dir + "/" + policy + "_seed" + std::to_string(seed);
  write_metrics_csv(res, prefix + ".results.csv");
  RunSummary sum;
  sum.label = policy;
  sum.seed = seed;
  sum.val_profit = res.mean_profit();
  sum.test_profit = res.mean_profit();
  save_run_summary(sum, prefix + ".summary.json");
  std::cout << policy << ": mean test profit " << res.mean_profit() << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::string& runs) {
  std::map<std::string, std::pair<double, int>> by_label;  // sum, count
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 &&
        name.substr(name.size() - 13) == ".summary.json") {
      const RunSummary s = load_run_summary(entry.path().string());
      by_label[s.label].first += s.test_profit;
      by_label[s.label].second += 1;
    }
  }
  if (by_label.empty()) {
    std::cerr << "no run summaries under " << runs << "\n";
    return 1;
  }
  double greedy = 0.0;
  bool have_greedy = by_label.count("greedy") > 0;
  if (have_greedy)
    greedy = by_label["greedy"].first / by_label["greedy"].second;

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!args.out.empty()) {
    file.open(args.out);
    out = &file;
  }
  *out << "policy,mean_test_profit,pct_vs_greedy\n";
  for (const auto& [label, sc] : by_label) {
    const double mean = sc.first / sc.second;
    *out << label << ',' << mean << ',';
    if (have_greedy && greedy != 0.0)
      *out << 100.0 * (mean - greedy) / std::abs(greedy);
    *out << "\n";
  }
  return 0;
}

int cmd_selftest() {
  const LatLon anchor{40.7075, -74.0113};
  const OperatingGraph g = OperatingGraph::build_hex_grid(11, 459.0, 2, anchor);

  // masking hand trace
  {
    WeightMatrix w(1, 12);
    w.at(0, 1) = 0.5;
    w.at(0, 2) = 0.03;
    MaskContext ctx;
    ctx.active_requests = 12;
    ctx.buffer2_occupied = {0};
    ctx.feasible = [](int, int) { return true; };
    const WeightMatrix m = mask(w, ctx);
    if (m.at(0, 1) != 0.5 || m.at(0, 2) != 0.0) {
      std::cerr << "selftest: masking trace failed\n";
      return 1;
    }
  }
  // coordinated vs degenerate-distribution target equivalence
  {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int it = 0; it < 200; ++it) {
      const int n = 4;
      std::vector<double> q(n), pi(n, 0.0);
      std::vector<std::uint8_t> sup(n, 1);
      for (double& v : q) v = u(rng);
      const int a = static_cast<int>(rng() % n);
      pi[a] = 1.0;
      const double r = u(rng), gamma = 0.925;
      const double lhs = coordinated_target_value(r, gamma, q[a]);
      const double rhs = local_target_value(r, gamma, 0.37, pi, q, sup);
      if (std::abs(lhs - rhs) > 1e-9) {
        std::cerr << "selftest: target equivalence failed\n";
        return 1;
      }
    }
  }
  // per-step conservation under a random policy
  {
    SimParams p;
    const FleetSim sim(g, p);
    const EpisodeSet set = generate_synthetic(2.0, g, 30, 2, 7);
    auto rng = std::make_shared<std::mt19937_64>(3);
    const WeightPolicy pol = make_random_policy(8, rng);
    for (const Episode& ep : set.episodes) {
      const EpisodeResult res = run_episode(
          sim, pol, cap_batches({{ep}}, 8).episodes[0].batches, 4, 8);
      for (const StepRecord& rec : res.trace) {
        double sum = 0.0;
        for (double x : rec.outcome.per_agent_reward) sum += x;
        if (std::abs(rec.outcome.revenue - rec.outcome.cost - sum) > 1e-9) {
          std::cerr << "selftest: conservation failed\n";
          return 1;
        }
      }
    }
  }
  std::cout << "selftest: ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AMoD fleet-control laboratory"};
  app.require_subcommand(1);
  CommonArgs args;
  std::string csv, checkpoint, split = "test", policy = "greedy", runs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "INI configuration file");
    sub->add_option("--out", args.out, "output directory or file");
    sub->add_option("--seed", args.seed, "run seed");
    sub->add_option("--loss", args.loss, "local|coordinated");
    sub->add_option("--rebalance", args.rebalance, "off|all|neighbors");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "build episode cache from a trip CSV");
  add_common(ingest);
  ingest->add_option("--csv", csv, "trip record CSV")->required();

  CLI::App* train = app.add_subcommand("train", "train the learner");
  add_common(train);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "actor checkpoint file")->required();
  evaluate->add_option("--split", split, "val|test");

  CLI::App* benchmark = app.add_subcommand("benchmark", "run a baseline policy");
  add_common(benchmark);
  benchmark->add_option("--policy", policy, "greedy|heuristic|random");

  CLI::App* compare = app.add_subcommand("compare", "aggregate run summaries");
  add_common(compare);
  compare->add_option("--runs", runs, "directory of run outputs")->required();

  app.add_subcommand("selftest", "run quick internal checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (app.got_subcommand("ingest")) return cmd_ingest(args, csv);
    if (app.got_subcommand("train")) return cmd_train(args);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(args, checkpoint, split);
    if (app.got_subcommand("benchmark")) return cmd_benchmark(args, policy);
    if (app.got_subcommand("compare")) return cmd_compare(args, runs);
    if (app.got_subcommand("selftest")) return cmd_selftest();
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
