#pragma once

// Multi-agent soft actor-critic with discrete actions: actor/critic assembly,
// the local (expectation) and coordinated (matching-bootstrapped) critic
// targets, the masked actor objective, replay, exploration schedule and the
// train/validate loop.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "amod/demand.hpp"
#include "amod/features.hpp"
#include "amod/net.hpp"
#include "amod/policies.hpp"
#include "amod/policy_net.hpp"
#include "amod/sim.hpp"

namespace amod {

enum class LossMode { local, coordinated };
enum class ActMode { random, noisy, greedy_stochastic };

struct Hyperparams {
  double gamma = 0.925;
  double alpha = 0.3;  // entropy coefficient
  // Optional linear decay of the entropy coefficient from `alpha` to
  // `alpha_final` between the end of warmup and `total_steps`; negative
  // keeps the coefficient constant. Late in training the TD errors shrink
  // and a constant coefficient lets the entropy term flatten the learned
  // request ranking; decaying it preserves the sharpened policy.
  double alpha_final = -1.0;
  int batch = 128;
  double lr = 3e-4;
  double ema_rho = 5e-4;
  double huber_delta = 10.0;
  double clip_norm = 10.0;
  int update_every = 20;
  long total_steps = 200000;
  long warmup_steps = 20000;       // random policy, no parameter updates
  long noise_decay_steps = 30000;  // sigma: sigma0 -> 0, linear
  double noise_sigma0 = 0.2;
  long validate_every = 2880;
  int replay_capacity = 100000;
  LossMode loss = LossMode::coordinated;
  bool actor_uses_target_critics = true;
  bool shuffle_inputs = true;
  // When set, the critics' observations encode the stored coordinated action
  // (accept flags, assigned origin/destination). When clear, the critics see
  // a neutral context and coordination enters only through the loss targets.
  // The conditioned variant trains each output column exclusively when the
  // context already announces that very action, so nothing ever constrains
  // the counterfactual columns the actor compares — the critic can satisfy
  // the regression by reading the action off the context, and its action
  // ranking stays uninformative. The neutral context forces the column index
  // to carry the action, which is what the actor needs.
  bool critic_sees_coordination = false;
};

struct Transition {
  SystemState s;
  CoordinatedAction a;
  std::vector<double> reward;  // per agent; includes the training-only signal
  SystemState s_next;
  bool terminal = false;
  int requests_so_far = 0;  // cumulative customer count up to and incl. s
  int requests_so_far_next = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("replay capacity must be >= 1");
  }

  void push(Transition tr) {
    if (static_cast<int>(data_.size()) < capacity_) {
      data_.push_back(std::move(tr));
    } else {
      data_[next_] = std::move(tr);
    }
    next_ = (next_ + 1) % capacity_;
  }

  int size() const { return static_cast<int>(data_.size()); }
  const Transition& at(int i) const { return data_.at(i); }

  std::vector<int> sample(int n, std::mt19937_64& rng) const {
    if (size() == 0) throw std::logic_error("sampling from an empty buffer");
    std::vector<int> idx(n);
    std::uniform_int_distribution<int> u(0, size() - 1);
    for (int& i : idx) i = u(rng);
    return idx;
  }

 private:
  int capacity_;
  int next_ = 0;
  std::vector<Transition> data_;
};

// Closed-form per-agent targets, shared by the learner and its oracles.
// `support` marks the admissible entries (reject + feasible slots); `pi` must
// already be renormalized over that support. The 0 * log 0 limit contributes
// nothing.
inline double local_target_value(double r, double gamma, double alpha,
                                 const std::vector<double>& pi,
                                 const std::vector<double>& qmin,
                                 const std::vector<std::uint8_t>& support) {
  double v = 0.0;
  for (size_t a = 0; a < pi.size(); ++a) {
    if (!support[a] || pi[a] <= 0.0) continue;
    v += pi[a] * (qmin[a] - alpha * std::log(pi[a]));
  }
  return r + gamma * v;
}

inline double coordinated_target_value(double r, double gamma, double q_at_abar) {
  return r + gamma * q_at_abar;
}

// Per-agent soft-policy objective: E_pi[alpha log pi - q] over the support.
inline double actor_objective_value(double alpha, const std::vector<double>& pi,
                                    const std::vector<double>& q,
                                    const std::vector<std::uint8_t>& support) {
  double v = 0.0;
  for (size_t a = 0; a < pi.size(); ++a) {
    if (!support[a] || pi[a] <= 0.0) continue;
    v += pi[a] * (alpha * std::log(pi[a]) - q[a]);
  }
  return v;
}

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;  // mean of the two critic losses
  bool applied = true;       // false when non-finite gradients were skipped
};

struct ValidationPoint {
  long step = 0;
  double mean_profit = 0.0;
};

struct TrainLogEntry {
  long step = 0;
  std::optional<double> actor_loss;
  std::optional<double> critic_loss;
  std::optional<double> val_profit;
};

class SacdLearner {
 public:
  using Scalar = float;

  SacdLearner(const FleetSim& sim, int fleet_size, int f_max, Hyperparams hp,
              NetTopology topo, std::uint64_t seed)
      : sim_(&sim),
        fleet_size_(fleet_size),
        f_max_(f_max),
        hp_(hp),
        replay_(hp.replay_capacity),
        rng_(seed),
        actor_(make_net(false, true, topo)),
        q1_(make_net(true, false, topo)),
        q2_(make_net(true, false, topo)),
        tq1_(make_net(true, false, topo)),
        tq2_(make_net(true, false, topo)) {
    actor_.init(seed);
    q1_.init(seed + 1);
    q2_.init(seed + 2);
    copy_params(tq1_.params(), q1_.params());
    copy_params(tq2_.params(), q2_.params());
    a_opt_.lr = q1_opt_.lr = q2_opt_.lr = hp_.lr;
  }

  const FleetSim& sim() const { return *sim_; }
  int f_max() const { return f_max_; }
  int fleet_size() const { return fleet_size_; }
  const Hyperparams& hyper() const { return hp_; }
  ReplayBuffer& replay() { return replay_; }
  PolicyNet<Scalar>& actor() { return actor_; }
  PolicyNet<Scalar>& critic1() { return q1_; }
  PolicyNet<Scalar>& critic2() { return q2_; }
  PolicyNet<Scalar>& target1() { return tq1_; }
  PolicyNet<Scalar>& target2() { return tq2_; }
  std::mt19937_64& rng() { return rng_; }

  void set_cumulative_average(std::vector<double> avg) { avg_cum_ = std::move(avg); }
  const std::vector<double>& cumulative_average() const { return avg_cum_; }

  // Linearly declining exploration noise after the random warmup.
  // The training loop reports the current environment step so the entropy
  // coefficient schedule can be evaluated inside updates.
  void set_env_step(long step) { env_step_ = step; }

  double effective_alpha() const {
    if (hp_.alpha_final < 0.0) return hp_.alpha;
    const long span = hp_.total_steps - hp_.warmup_steps;
    if (span <= 0 || env_step_ >= hp_.total_steps) return hp_.alpha_final;
    if (env_step_ <= hp_.warmup_steps) return hp_.alpha;
    const double f =
        static_cast<double>(env_step_ - hp_.warmup_steps) / span;
    return hp_.alpha + f * (hp_.alpha_final - hp_.alpha);
  }

  double noise_sigma(long step) const {
    if (step < hp_.warmup_steps) return hp_.noise_sigma0;
    const long d = step - hp_.warmup_steps;
    if (hp_.noise_decay_steps <= 0 || d >= hp_.noise_decay_steps) return 0.0;
    return hp_.noise_sigma0 * (1.0 - static_cast<double>(d) / hp_.noise_decay_steps);
  }

  // Raw pre-masking weight matrix for one decision epoch.
  WeightMatrix policy_weights(const SystemState& s,
                              const std::vector<Request>& slots,
                              int requests_so_far, ActMode mode, double sigma) {
    if (mode == ActMode::random)
      return random_weights(s.fleet_size(), f_max_, rng_);
    const Observation obs =
        encode_actor(*sim_, s, slots, &avg_cum_, requests_so_far, f_max_);
    const std::vector<Scalar> probs = actor_.forward(obs);
    WeightMatrix w(s.fleet_size(), f_max_);
    std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
    const int odim = f_max_ + 1;
    for (int j = 0; j < s.fleet_size(); ++j)
      for (int i = 0; i <= f_max_; ++i) {
        double v = probs[static_cast<size_t>(j) * odim + i];
        if (mode == ActMode::noisy && sigma > 0.0)
          v = std::clamp(v + noise(rng_), 0.0, 1.0);
        w.at(j, i) = v;
      }
    return w;
  }

  // Admissible entries for agent j at (s, slots): the reject entry plus every
  // feasible slot; a buffer2-blocked vehicle keeps only the reject entry.
  std::vector<std::uint8_t> support_for(const SystemState& s,
                                        const std::vector<Request>& slots,
                                        int j) const {
    std::vector<std::uint8_t> sup(f_max_ + 1, 0);
    sup[0] = 1;
    if (s.vehicles[j].buffer2) return sup;
    for (size_t i = 0; i < slots.size(); ++i)
      if (sim_->feasible(s, slots, static_cast<int>(i), j)) sup[i + 1] = 1;
    return sup;
  }

  // Context the critics are conditioned on; see critic_sees_coordination.
  CoordinatedAction critic_context(const SystemState& s,
                                   const CoordinatedAction& a) const {
    if (hp_.critic_sees_coordination) return a;
    CoordinatedAction neutral;
    neutral.per_request.assign(s.customer_requests.size(), 0);
    neutral.per_vehicle.assign(s.fleet_size(), -1);
    neutral.active_reject.assign(s.fleet_size(), 1);
    return neutral;
  }

  // Everything the targets need about the successor state: the recomputed
  // coordinated action, the per-agent minimum target-critic values evaluated
  // in its context, and the actor's masked, renormalized distribution.
  struct NextEval {
    CoordinatedAction abar;
    std::vector<std::vector<double>> pi;                // per agent, odim
    std::vector<std::vector<double>> qmin;              // per agent, odim
    std::vector<std::vector<std::uint8_t>> support;     // per agent, odim
  };

  NextEval evaluate_next(const SystemState& s_next, int requests_so_far_next) {
    NextEval ev;
    const std::vector<Request> slots = sim_->request_slots(s_next);
    const Observation obs_a =
        encode_actor(*sim_, s_next, slots, &avg_cum_, requests_so_far_next, f_max_);
    const std::vector<Scalar> probs = actor_.forward(obs_a);
    const int k = s_next.fleet_size();
    const int odim = f_max_ + 1;

    WeightMatrix w(k, f_max_);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i <= f_max_; ++i)
        w.at(j, i) = probs[static_cast<size_t>(j) * odim + i];
    const WeightMatrix masked = mask(w, sim_->mask_context(s_next, slots));
    ev.abar = solve_assignment(masked);

    const Observation obs_c =
        encode_critic(*sim_, s_next, slots, &avg_cum_, requests_so_far_next,
                      f_max_, critic_context(s_next, ev.abar));
    const std::vector<Scalar> v1 = tq1_.forward(obs_c);
    const std::vector<Scalar> v2 = tq2_.forward(obs_c);

    ev.pi.resize(k);
    ev.qmin.resize(k);
    ev.support.resize(k);
    for (int j = 0; j < k; ++j) {
      ev.support[j] = support_for(s_next, slots, j);
      ev.qmin[j].resize(odim);
      ev.pi[j].assign(odim, 0.0);
      double mass = 0.0;
      for (int a = 0; a < odim; ++a) {
        ev.qmin[j][a] = std::min<double>(v1[static_cast<size_t>(j) * odim + a],
                                         v2[static_cast<size_t>(j) * odim + a]);
        if (ev.support[j][a]) {
          ev.pi[j][a] = probs[static_cast<size_t>(j) * odim + a];
          mass += ev.pi[j][a];
        }
      }
      if (mass > 0.0)
        for (int a = 0; a < odim; ++a) ev.pi[j][a] /= mass;
      else
        ev.pi[j][0] = 1.0;
    }
    return ev;
  }

  // Per-agent bootstrap target for one transition.
  double target_for(const Transition& tr, const NextEval& ev, int j,
                    LossMode mode) const {
    const double r = tr.reward[j];
    if (tr.terminal) return r;
    if (mode == LossMode::coordinated) {
      const int idx = ev.abar.per_vehicle[j] >= 0 ? ev.abar.per_vehicle[j] + 1 : 0;
      return coordinated_target_value(r, hp_.gamma, ev.qmin[j][idx]);
    }
    return local_target_value(r, hp_.gamma, effective_alpha(), ev.pi[j],
                              ev.qmin[j], ev.support[j]);
  }

  // Agents whose log-probability the actor loss may move: matched vehicles
  // and active rejects. Passive rejects (masking or the assignment removed
  // every option) are skipped there, because the policy's own choice was
  // overridden. The critic regression instead includes every agent at its
  // factual action — an unmatched vehicle factually rejected, and skipping
  // it would leave busy-state values untrained, severing the bootstrap
  // chain between an acceptance and the fare it later collects.
  static bool agent_included(const CoordinatedAction& a, int j) {
    return a.per_vehicle[j] >= 0 || a.active_reject[j] != 0;
  }

  UpdateStats update() {
    const std::vector<int> idx = replay_.sample(hp_.batch, rng_);
    UpdateStats stats;

    // Successor evaluations and targets are shared by both critics.
    std::vector<NextEval> evs(idx.size());
    std::vector<std::vector<int>> perms(idx.size());
    for (size_t b = 0; b < idx.size(); ++b) {
      const Transition& tr = replay_.at(idx[b]);
      evs[b] = evaluate_next(tr.s_next, tr.requests_so_far_next);
      const int customers = static_cast<int>(tr.s.customer_requests.size());
      perms[b] = hp_.shuffle_inputs ? make_slot_perm(customers, f_max_, rng_)
                                    : identity_perm();
    }

    const double c1 = critic_pass(q1_, idx, evs, perms);
    const double c2 = critic_pass(q2_, idx, evs, perms);
    stats.critic_loss = 0.5 * (c1 + c2);
    const bool ok1 = adam_step(q1_.params(), q1_opt_, hp_.clip_norm);
    const bool ok2 = adam_step(q2_.params(), q2_opt_, hp_.clip_norm);

    stats.actor_loss = actor_pass(idx, perms);
    const bool ok3 = adam_step(actor_.params(), a_opt_, hp_.clip_norm);
    stats.applied = ok1 && ok2 && ok3;

    ema_update(tq1_.params(), q1_.params(), hp_.ema_rho);
    ema_update(tq2_.params(), q2_.params(), hp_.ema_rho);
    return stats;
  }

  // Greedy-stochastic evaluation policy over the current actor.
  WeightPolicy evaluation_policy() {
    auto counter = std::make_shared<int>(0);
    auto last_t = std::make_shared<int>(-1);
    return [this, counter, last_t](const SystemState& s,
                                   const std::vector<Request>& slots) {
      if (s.t <= *last_t) *counter = 0;  // new episode
      *last_t = s.t;
      *counter += static_cast<int>(s.customer_requests.size());
      return policy_weights(s, slots, *counter, ActMode::greedy_stochastic, 0.0);
    };
  }

  void save(const std::string& prefix) const {
    save_params(actor_.params(), prefix + ".actor.bin");
    save_params(q1_.params(), prefix + ".q1.bin");
    save_params(q2_.params(), prefix + ".q2.bin");
  }

  void load_actor(const std::string& path) { load_params(actor_.params(), path); }

 private:
  PolicyNet<Scalar> make_net(bool critic, bool softmax, const NetTopology& topo) {
    const FeatureDims d = feature_dims(sim_->params().rebalancing, critic);
    return PolicyNet<Scalar>(d.misc, d.req, d.veh, d.pair, f_max_, fleet_size_,
                             softmax, topo);
  }

  std::vector<int> identity_perm() const {
    std::vector<int> p(f_max_);
    for (int i = 0; i < f_max_; ++i) p[i] = i;
    return p;
  }

  static std::vector<int> invert_perm(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
  }

  // Huber regression of Q(ā_j | s, j) toward the per-agent target for one
  // critic; accumulates gradients and returns the batch loss.
  double critic_pass(PolicyNet<Scalar>& critic, const std::vector<int>& idx,
                     const std::vector<NextEval>& evs,
                     const std::vector<std::vector<int>>& perms) {
    critic.params().zero_grads();
    const int odim = f_max_ + 1;
    const double scale = 1.0 / static_cast<double>(idx.size());
    double loss = 0.0;
    for (size_t b = 0; b < idx.size(); ++b) {
      const Transition& tr = replay_.at(idx[b]);
      const std::vector<Request> slots = sim_->request_slots(tr.s);
      Observation obs = encode_critic(*sim_, tr.s, slots, &avg_cum_,
                                      tr.requests_so_far, f_max_,
                                      critic_context(tr.s, tr.a));
      permute_slots(obs, perms[b]);
      const std::vector<int> inv = invert_perm(perms[b]);

      typename PolicyNet<Scalar>::Cache cache;
      const std::vector<Scalar> out = critic.forward(obs, &cache);
      std::vector<Scalar> dout(out.size(), Scalar(0));
      for (int j = 0; j < tr.s.fleet_size(); ++j) {
        const int old_idx = tr.a.per_vehicle[j];
        const int a_idx = old_idx >= 0 ? inv[old_idx] + 1 : 0;
        const double target = target_for(tr, evs[b], j, hp_.loss);
        const double pred = out[static_cast<size_t>(j) * odim + a_idx];
        const auto h = huber<double>(pred, target, hp_.huber_delta);
        loss += h.value * scale;
        dout[static_cast<size_t>(j) * odim + a_idx] =
            static_cast<Scalar>(h.dpred * scale);
      }
      critic.backward(obs, cache, dout);
    }
    return loss;
  }

  // Masked soft-policy objective: expectation under the renormalized actor
  // distribution of (alpha log pi - min_m Q^m), critics evaluated in the
  // stored coordinated action's context.
  double actor_pass(const std::vector<int>& idx,
                    const std::vector<std::vector<int>>& perms) {
    actor_.params().zero_grads();
    const int odim = f_max_ + 1;
    const double scale = 1.0 / static_cast<double>(idx.size());
    const double alpha = effective_alpha();
    double loss = 0.0;
    for (size_t b = 0; b < idx.size(); ++b) {
      const Transition& tr = replay_.at(idx[b]);
      const std::vector<Request> slots = sim_->request_slots(tr.s);
      Observation obs_a =
          encode_actor(*sim_, tr.s, slots, &avg_cum_, tr.requests_so_far, f_max_);
      Observation obs_c =
          encode_critic(*sim_, tr.s, slots, &avg_cum_, tr.requests_so_far,
                        f_max_, critic_context(tr.s, tr.a));
      permute_slots(obs_a, perms[b]);
      permute_slots(obs_c, perms[b]);

      typename PolicyNet<Scalar>::Cache cache;
      const std::vector<Scalar> probs = actor_.forward(obs_a, &cache);
      PolicyNet<Scalar>& c1 = hp_.actor_uses_target_critics ? tq1_ : q1_;
      PolicyNet<Scalar>& c2 = hp_.actor_uses_target_critics ? tq2_ : q2_;
      const std::vector<Scalar> v1 = c1.forward(obs_c);
      const std::vector<Scalar> v2 = c2.forward(obs_c);

      std::vector<Scalar> dout(probs.size(), Scalar(0));
      for (int j = 0; j < tr.s.fleet_size(); ++j) {
        if (!agent_included(tr.a, j)) continue;
        std::vector<std::uint8_t> sup = support_for(tr.s, slots, j);
        // map the support into the permuted slot order
        std::vector<std::uint8_t> psup(odim, 0);
        psup[0] = sup[0];
        for (int i = 0; i < f_max_; ++i) psup[i + 1] = sup[perms[b][i] + 1];

        double mass = 0.0;
        for (int a = 0; a < odim; ++a)
          if (psup[a]) mass += probs[static_cast<size_t>(j) * odim + a];
        if (mass <= 0.0) continue;

        double mean_term = 0.0;
        std::vector<double> pi(odim, 0.0), q(odim, 0.0), term(odim, 0.0);
        for (int a = 0; a < odim; ++a) {
          if (!psup[a]) continue;
          pi[a] = probs[static_cast<size_t>(j) * odim + a] / mass;
          q[a] = std::min<double>(v1[static_cast<size_t>(j) * odim + a],
                                  v2[static_cast<size_t>(j) * odim + a]);
          term[a] = alpha * std::log(std::max(pi[a], 1e-12)) - q[a];
          mean_term += pi[a] * (term[a] + alpha);
        }
        loss += actor_objective_value(alpha, pi, q, psup) * scale;
        for (int a = 0; a < odim; ++a) {
          if (!psup[a]) continue;
          dout[static_cast<size_t>(j) * odim + a] = static_cast<Scalar>(
              ((term[a] + alpha) - mean_term) / mass * scale);
        }
      }
      actor_.backward(obs_a, cache, dout);
    }
    return loss;
  }

  const FleetSim* sim_;
  int fleet_size_;
  int f_max_;
  Hyperparams hp_;
  long env_step_ = 0;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  std::vector<double> avg_cum_;
  PolicyNet<Scalar> actor_, q1_, q2_, tq1_, tq2_;
  AdamState<Scalar> a_opt_, q1_opt_, q2_opt_;
};

struct TrainResult {
  std::vector<ValidationPoint> curve;
  double best_val_profit = -std::numeric_limits<double>::infinity();
  long best_val_step = -1;
  long steps = 0;
};

// Off-policy training loop: environment interaction in the current mode
// (random -> noisy -> greedy-stochastic), one gradient update per
// `update_every` steps after warmup, periodic validation with best-model
// checkpointing.
inline TrainResult train(SacdLearner& learner, const EpisodeSet& data,
                         int fleet_size,
                         const std::string& checkpoint_prefix = "",
                         std::ostream* log = nullptr) {
  const FleetSim& sim = learner.sim();
  const Hyperparams& hp = learner.hyper();
  const std::vector<const Episode*> train_eps = data.split(Split::train);
  const std::vector<const Episode*> val_eps = data.split(Split::val);
  if (train_eps.empty()) throw std::invalid_argument("train: no training episodes");

  int horizon = 0;
  for (const Episode* e : train_eps)
    horizon = std::max(horizon, static_cast<int>(e->batches.size()));
  learner.set_cumulative_average(cumulative_average_counts(data, horizon));

  auto emit = [log](const TrainLogEntry& e) {
    if (!log) return;
    nlohmann::json j;
    j["step"] = e.step;
    if (e.actor_loss) j["actor_loss"] = *e.actor_loss;
    if (e.critic_loss) j["critic_loss"] = *e.critic_loss;
    if (e.val_profit) j["val_profit"] = *e.val_profit;
    *log << j.dump() << "\n";
  };

  TrainResult result;
  std::mt19937_64& rng = learner.rng();
  long step = 0;
  while (step < hp.total_steps) {
    const Episode* ep = train_eps[rng() % train_eps.size()];
    const auto& demand = ep->batches;
    const int T = static_cast<int>(demand.size());
    SystemState state = sim.initial_state(fleet_size, T);
    state.customer_requests = demand[0];
    int requests_so_far = static_cast<int>(demand[0].size());

    for (int t = 0; t < T && step < hp.total_steps; ++t) {
      const std::vector<Request> slots = sim.request_slots(state);
      const ActMode mode = step < hp.warmup_steps
                               ? ActMode::random
                               : (learner.noise_sigma(step) > 0.0
                                      ? ActMode::noisy
                                      : ActMode::greedy_stochastic);
      WeightMatrix w = learner.policy_weights(state, slots, requests_so_far,
                                              mode, learner.noise_sigma(step));
      const WeightMatrix masked = mask(w, sim.mask_context(state, slots));
      const CoordinatedAction act = solve_assignment(masked);
      const SystemState s_plus = sim.apply_action(state, slots, act);
      std::vector<Request> next =
          t + 1 < T ? demand[t + 1] : std::vector<Request>{};
      const int next_count = static_cast<int>(next.size());
      auto [next_state, outcome] = sim.advance(s_plus, std::move(next));

      Transition tr;
      tr.s = state;
      tr.a = act;
      tr.reward = outcome.per_agent_reward;
      if (sim.params().rebalancing && sim.params().reb.shaping_enabled) {
        const ZoneOccupancy occ = zone_occupancy(state, sim.graph());
        for (int j = 0; j < state.fleet_size(); ++j) {
          const int i = act.per_vehicle[j];
          if (i >= 0 && slots[i].is_rebalancing())
            tr.reward[j] += shaping_signal(occ, state.vehicles[j].position,
                                           slots[i].destination,
                                           sim.params().reb);
        }
      }
      tr.s_next = next_state;
      tr.terminal = t + 1 == T;
      tr.requests_so_far = requests_so_far;
      tr.requests_so_far_next = requests_so_far + next_count;
      learner.replay().push(std::move(tr));

      requests_so_far += next_count;
      state = std::move(next_state);
      ++step;

      if (step > hp.warmup_steps && step % hp.update_every == 0 &&
          learner.replay().size() >= hp.batch) {
        learner.set_env_step(step);
        const UpdateStats st = learner.update();
        TrainLogEntry e;
        e.step = step;
        e.actor_loss = st.actor_loss;
        e.critic_loss = st.critic_loss;
        emit(e);
      }

      if (step % hp.validate_every == 0 && !val_eps.empty()) {
        double total = 0.0;
        const WeightPolicy pol = learner.evaluation_policy();
        for (const Episode* ve : val_eps)
          total += run_episode(sim, pol, ve->batches, fleet_size,
                               learner.f_max())
                       .profit;
        const double mean = total / val_eps.size();
        result.curve.push_back({step, mean});
        TrainLogEntry e;
        e.step = step;
        e.val_profit = mean;
        emit(e);
        if (mean > result.best_val_profit) {
          result.best_val_profit = mean;
          result.best_val_step = step;
          if (!checkpoint_prefix.empty()) {
            learner.save(checkpoint_prefix);
            nlohmann::json sj;
            sj["step"] = step;
            sj["val_profit"] = mean;
            sj["gamma"] = hp.gamma;
            sj["alpha"] = hp.alpha;
            sj["batch"] = hp.batch;
            sj["loss"] = hp.loss == LossMode::coordinated ? "coordinated" : "local";
            std::ofstream side(checkpoint_prefix + ".json");
            side << sj.dump(2) << "\n";
          }
        }
      }
    }
  }
  result.steps = step;
  return result;
}

}  // namespace amod
