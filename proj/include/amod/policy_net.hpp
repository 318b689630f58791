#pragma once

// The parallel actor/critic network: request and vehicle embeddings, a mean
// context over each, a slot-parallel trunk with shared parameters, and a head
// over the flattened trunk outputs ending in F_max+1 units (softmax for the
// actor, linear for the critic). Index 0 of the output is the reject entry.

#include <random>
#include <stdexcept>
#include <vector>

#include "amod/features.hpp"
#include "amod/net.hpp"

namespace amod {

struct NetTopology {
  int embedding = 32;
  std::vector<int> trunk = {512, 256, 128, 64, 32};
  std::vector<int> head = {1024, 512, 256, 128, 64, 32};
};

template <typename T>
class PolicyNet {
 public:
  PolicyNet(int misc_dim, int req_dim, int veh_dim, int pair_dim, int f_max,
            int vehicles, bool softmax_head, NetTopology topo = {})
      : misc_dim_(misc_dim),
        req_dim_(req_dim),
        veh_dim_(veh_dim),
        pair_dim_(pair_dim),
        f_max_(f_max),
        vehicles_(vehicles),
        topo_(std::move(topo)) {
    req_emb_ = make_dense(store_, "req_emb", req_dim_, topo_.embedding, Act::relu);
    veh_emb_ = make_dense(store_, "veh_emb", veh_dim_, topo_.embedding, Act::relu);
    // trunk input: misc + request embedding + vehicle embedding + global
    // context (request + vehicle) + pair features
    trunk_in_ = misc_dim_ + 4 * topo_.embedding + pair_dim_;
    int in = trunk_in_;
    for (size_t l = 0; l < topo_.trunk.size(); ++l) {
      trunk_.push_back(make_dense(store_, "trunk" + std::to_string(l), in,
                                  topo_.trunk[l], Act::relu));
      in = topo_.trunk[l];
    }
    trunk_out_ = in;
    in = f_max_ * trunk_out_;
    for (size_t l = 0; l < topo_.head.size(); ++l) {
      head_.push_back(make_dense(store_, "head" + std::to_string(l), in,
                                 topo_.head[l], Act::relu));
      in = topo_.head[l];
    }
    out_ = make_dense(store_, "out", in, f_max_ + 1,
                      softmax_head ? Act::softmax : Act::none);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    init_dense(store_, req_emb_, rng);
    init_dense(store_, veh_emb_, rng);
    for (const auto& d : trunk_) init_dense(store_, d, rng);
    for (const auto& d : head_) init_dense(store_, d, rng);
    init_dense(store_, out_, rng);
  }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  int output_dim() const { return f_max_ + 1; }
  int f_max() const { return f_max_; }
  int vehicles() const { return vehicles_; }

  struct Cache {
    std::vector<T> misc;                    // misc_dim
    std::vector<T> req_in;                  // f_max x req_dim
    std::vector<T> veh_in;                  // K x veh_dim
    std::vector<T> req_emb;                 // f_max x emb
    std::vector<T> veh_emb;                 // K x emb
    std::vector<T> ctx;                     // 2 x emb
    std::vector<T> trunk_in;                // K x f_max x trunk_in dim
    std::vector<std::vector<T>> trunk_act;  // per layer: K x f_max x size
    std::vector<std::vector<T>> head_act;   // per layer: K x size
    std::vector<T> out;                     // K x (f_max + 1)
  };

  // Forward pass for every agent; returns K x (f_max+1) outputs.
  std::vector<T> forward(const Observation& obs, Cache* cache = nullptr) const {
    check_obs(obs);
    Cache local;
    Cache& c = cache ? *cache : local;
    const int emb = topo_.embedding;
    const int K = vehicles_;

    c.misc.assign(obs.misc.begin(), obs.misc.end());
    c.req_in.resize(static_cast<size_t>(f_max_) * req_dim_);
    for (size_t i = 0; i < c.req_in.size(); ++i)
      c.req_in[i] = static_cast<T>(obs.req[i]);
    c.veh_in.resize(static_cast<size_t>(K) * veh_dim_);
    for (size_t i = 0; i < c.veh_in.size(); ++i)
      c.veh_in[i] = static_cast<T>(obs.veh[i]);

    c.req_emb.resize(static_cast<size_t>(f_max_) * emb);
    for (int i = 0; i < f_max_; ++i)
      dense_forward(store_, req_emb_, c.req_in.data() + static_cast<size_t>(i) * req_dim_,
                    c.req_emb.data() + static_cast<size_t>(i) * emb);
    c.veh_emb.resize(static_cast<size_t>(K) * emb);
    for (int j = 0; j < K; ++j)
      dense_forward(store_, veh_emb_, c.veh_in.data() + static_cast<size_t>(j) * veh_dim_,
                    c.veh_emb.data() + static_cast<size_t>(j) * emb);

    c.ctx.assign(2 * emb, T(0));
    for (int i = 0; i < f_max_; ++i)
      for (int e = 0; e < emb; ++e) c.ctx[e] += c.req_emb[static_cast<size_t>(i) * emb + e];
    for (int e = 0; e < emb; ++e) c.ctx[e] /= T(f_max_);
    for (int j = 0; j < K; ++j)
      for (int e = 0; e < emb; ++e)
        c.ctx[emb + e] += c.veh_emb[static_cast<size_t>(j) * emb + e];
    for (int e = 0; e < emb; ++e) c.ctx[emb + e] /= T(K);

    c.trunk_in.resize(static_cast<size_t>(K) * f_max_ * trunk_in_);
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < f_max_; ++i) {
        T* x = c.trunk_in.data() + (static_cast<size_t>(j) * f_max_ + i) * trunk_in_;
        int off = 0;
        for (int m = 0; m < misc_dim_; ++m) x[off++] = c.misc[m];
        for (int e = 0; e < emb; ++e) x[off++] = c.req_emb[static_cast<size_t>(i) * emb + e];
        for (int e = 0; e < emb; ++e) x[off++] = c.veh_emb[static_cast<size_t>(j) * emb + e];
        for (int e = 0; e < 2 * emb; ++e) x[off++] = c.ctx[e];
        for (int p = 0; p < pair_dim_; ++p)
          x[off++] = static_cast<T>(obs.pair_at(j, i)[p]);
      }

    c.trunk_act.assign(trunk_.size(), {});
    const T* prev = c.trunk_in.data();
    int prev_dim = trunk_in_;
    for (size_t l = 0; l < trunk_.size(); ++l) {
      c.trunk_act[l].resize(static_cast<size_t>(K) * f_max_ * trunk_[l].out);
      for (int s = 0; s < K * f_max_; ++s)
        dense_forward(store_, trunk_[l], prev + static_cast<size_t>(s) * prev_dim,
                      c.trunk_act[l].data() + static_cast<size_t>(s) * trunk_[l].out);
      prev = c.trunk_act[l].data();
      prev_dim = trunk_[l].out;
    }

    c.head_act.assign(head_.size(), {});
    const T* flat = prev;  // K x (f_max * trunk_out)
    int flat_dim = f_max_ * trunk_out_;
    for (size_t l = 0; l < head_.size(); ++l) {
      c.head_act[l].resize(static_cast<size_t>(K) * head_[l].out);
      for (int j = 0; j < K; ++j)
        dense_forward(store_, head_[l], flat + static_cast<size_t>(j) * flat_dim,
                      c.head_act[l].data() + static_cast<size_t>(j) * head_[l].out);
      flat = c.head_act[l].data();
      flat_dim = head_[l].out;
    }

    c.out.resize(static_cast<size_t>(K) * (f_max_ + 1));
    for (int j = 0; j < K; ++j)
      dense_forward(store_, out_, flat + static_cast<size_t>(j) * flat_dim,
                    c.out.data() + static_cast<size_t>(j) * (f_max_ + 1));
    return c.out;
  }

  // Accumulates parameter gradients from upstream dL/doutput
  // (K x (f_max+1), post-activation).
  void backward(const Observation& obs, const Cache& c,
                const std::vector<T>& dout) {
    const int emb = topo_.embedding;
    const int K = vehicles_;
    const int odim = f_max_ + 1;
    if (static_cast<int>(dout.size()) != K * odim)
      throw std::logic_error("backward: upstream gradient shape mismatch");

    // head stack (per agent)
    const int flat_dim = f_max_ * trunk_out_;
    const T* head_in =
        trunk_.empty() ? c.trunk_in.data() : c.trunk_act.back().data();
    std::vector<T> d_cur = dout;
    int cur_dim = odim;
    {
      const T* x = head_.empty() ? head_in : c.head_act.back().data();
      const int in_dim = out_.in;
      std::vector<T> dx(static_cast<size_t>(K) * in_dim);
      for (int j = 0; j < K; ++j)
        dense_backward(store_, out_, x + static_cast<size_t>(j) * in_dim,
                       c.out.data() + static_cast<size_t>(j) * odim,
                       d_cur.data() + static_cast<size_t>(j) * cur_dim,
                       dx.data() + static_cast<size_t>(j) * in_dim);
      d_cur = std::move(dx);
      cur_dim = in_dim;
    }
    for (int l = static_cast<int>(head_.size()) - 1; l >= 0; --l) {
      const T* x = l == 0 ? head_in : c.head_act[l - 1].data();
      const int in_dim = head_[l].in;
      std::vector<T> dx(static_cast<size_t>(K) * in_dim);
      for (int j = 0; j < K; ++j)
        dense_backward(store_, head_[l], x + static_cast<size_t>(j) * in_dim,
                       c.head_act[l].data() + static_cast<size_t>(j) * head_[l].out,
                       d_cur.data() + static_cast<size_t>(j) * cur_dim,
                       dx.data() + static_cast<size_t>(j) * in_dim);
      d_cur = std::move(dx);
      cur_dim = in_dim;
    }
    if (cur_dim != flat_dim) throw std::logic_error("backward: flatten mismatch");

    // trunk stack (per agent-slot, shared parameters)
    for (int l = static_cast<int>(trunk_.size()) - 1; l >= 0; --l) {
      const T* x = l == 0 ? c.trunk_in.data() : c.trunk_act[l - 1].data();
      const int in_dim = trunk_[l].in;
      std::vector<T> dx(static_cast<size_t>(K) * f_max_ * in_dim);
      for (int s = 0; s < K * f_max_; ++s)
        dense_backward(store_, trunk_[l], x + static_cast<size_t>(s) * in_dim,
                       c.trunk_act[l].data() + static_cast<size_t>(s) * trunk_[l].out,
                       d_cur.data() + static_cast<size_t>(s) * trunk_[l].out,
                       dx.data() + static_cast<size_t>(s) * in_dim);
      d_cur = std::move(dx);
      cur_dim = in_dim;
    }
    if (cur_dim != trunk_in_) throw std::logic_error("backward: trunk mismatch");

    // split trunk-input gradients into embeddings and context
    std::vector<T> d_req_emb(static_cast<size_t>(f_max_) * emb, T(0));
    std::vector<T> d_veh_emb(static_cast<size_t>(K) * emb, T(0));
    std::vector<T> d_ctx(2 * emb, T(0));
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < f_max_; ++i) {
        const T* dx = d_cur.data() + (static_cast<size_t>(j) * f_max_ + i) * trunk_in_;
        int off = misc_dim_;
        for (int e = 0; e < emb; ++e)
          d_req_emb[static_cast<size_t>(i) * emb + e] += dx[off + e];
        off += emb;
        for (int e = 0; e < emb; ++e)
          d_veh_emb[static_cast<size_t>(j) * emb + e] += dx[off + e];
        off += emb;
        for (int e = 0; e < 2 * emb; ++e) d_ctx[e] += dx[off + e];
      }
    for (int i = 0; i < f_max_; ++i)
      for (int e = 0; e < emb; ++e)
        d_req_emb[static_cast<size_t>(i) * emb + e] += d_ctx[e] / T(f_max_);
    for (int j = 0; j < K; ++j)
      for (int e = 0; e < emb; ++e)
        d_veh_emb[static_cast<size_t>(j) * emb + e] += d_ctx[emb + e] / T(K);

    for (int i = 0; i < f_max_; ++i)
      dense_backward(store_, req_emb_,
                     c.req_in.data() + static_cast<size_t>(i) * req_dim_,
                     c.req_emb.data() + static_cast<size_t>(i) * emb,
                     d_req_emb.data() + static_cast<size_t>(i) * emb,
                     static_cast<T*>(nullptr));
    for (int j = 0; j < K; ++j)
      dense_backward(store_, veh_emb_,
                     c.veh_in.data() + static_cast<size_t>(j) * veh_dim_,
                     c.veh_emb.data() + static_cast<size_t>(j) * emb,
                     d_veh_emb.data() + static_cast<size_t>(j) * emb,
                     static_cast<T*>(nullptr));
  }

 private:
  void check_obs(const Observation& obs) const {
    if (obs.misc_dim != misc_dim_ || obs.req_dim != req_dim_ ||
        obs.veh_dim != veh_dim_ || obs.pair_dim != pair_dim_ ||
        obs.f_max != f_max_ || obs.vehicles != vehicles_)
      throw std::logic_error("PolicyNet: observation shape mismatch");
  }

  int misc_dim_, req_dim_, veh_dim_, pair_dim_, f_max_, vehicles_;
  NetTopology topo_;
  int trunk_in_ = 0, trunk_out_ = 0;
  ParamStore<T> store_;
  Dense<T> req_emb_, veh_emb_, out_;
  std::vector<Dense<T>> trunk_, head_;
};

}  // namespace amod
