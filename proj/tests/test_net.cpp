#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>

#include "amod/net.hpp"
#include "amod/policy_net.hpp"

using namespace amod;

TEST_CASE("huber loss values and slopes") {
  CHECK(huber<double>(3.0, 3.0).value == 0.0);
  CHECK(huber<double>(3.0, 3.0).dpred == 0.0);
  auto quad = huber<double>(4.0, 3.0);  // |e| = 1 <= delta
  CHECK(quad.value == Catch::Approx(0.5));
  CHECK(quad.dpred == Catch::Approx(1.0));
  auto lin = huber<double>(23.0, 3.0);  // |e| = 20 > delta = 10
  CHECK(lin.value == Catch::Approx(10.0 * (20.0 - 5.0)));
  CHECK(lin.dpred == 10.0);
  auto neg = huber<double>(3.0, 23.0);
  CHECK(neg.value == Catch::Approx(150.0));
  CHECK(neg.dpred == -10.0);
  CHECK_THROWS_AS(huber<double>(1.0, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("adam: descent, clipping and non-finite rejection") {
  ParamStore<double> store;
  const int id = store.add("w", {2});
  store.at(id).value = {1.0, -1.0};
  AdamState<double> st;
  st.lr = 0.1;

  SECTION("first step moves against the gradient by ~lr") {
    store.at(id).grad = {0.5, -0.5};
    REQUIRE(adam_step(store, st));
    CHECK(store.at(id).value[0] == Catch::Approx(1.0 - 0.1).epsilon(1e-3));
    CHECK(store.at(id).value[1] == Catch::Approx(-1.0 + 0.1).epsilon(1e-3));
  }
  SECTION("global-norm clipping rescales large gradients") {
    store.at(id).grad = {30.0, 40.0};  // norm 50 -> scaled to 10
    REQUIRE(adam_step(store, st, 10.0));
    // Adam normalizes per-coordinate, so check the clip through grad_norm
    store.at(id).grad = {30.0, 40.0};
    const double n = store.grad_norm();
    CHECK(n == Catch::Approx(50.0));
    store.scale_grads(10.0 / n);
    CHECK(store.grad_norm() == Catch::Approx(10.0));
  }
  SECTION("non-finite gradients leave parameters untouched") {
    store.at(id).grad = {std::nan(""), 0.0};
    CHECK_FALSE(adam_step(store, st));
    CHECK(store.at(id).value[0] == 1.0);
    CHECK(st.step == 0);
  }
  SECTION("l2 penalty gradient is 2 c w") {
    store.zero_grads();
    store.add_l2_grads(0.25);
    CHECK(store.at(id).grad[0] == Catch::Approx(0.5));
    CHECK(store.at(id).grad[1] == Catch::Approx(-0.5));
  }
}

TEST_CASE("ema update closed form") {
  ParamStore<double> online, target;
  online.add("w", {1});
  target.add("w", {1});
  online.at(0).value = {1.0};
  target.at(0).value = {0.0};
  const double rho = 5e-4;
  SECTION("theta == theta_bar stays put") {
    target.at(0).value = {1.0};
    ema_update(target, online, rho);
    CHECK(target.at(0).value[0] == 1.0);
  }
  SECTION("rho = 1 copies") {
    ema_update(target, online, 1.0);
    CHECK(target.at(0).value[0] == 1.0);
  }
  SECTION("n steps from 0 toward 1 give 1 - (1-rho)^n") {
    const int n = 200;
    for (int i = 0; i < n; ++i) ema_update(target, online, rho);
    CHECK(target.at(0).value[0] ==
          Catch::Approx(1.0 - std::pow(1.0 - rho, n)).epsilon(1e-10));
  }
}

TEST_CASE("dense forward matches a straightforward evaluation") {
  ParamStore<double> store;
  Dense<double> d = make_dense(store, "d", 3, 2, Act::none);
  store.at(d.w_id).value = {1, 2, 3, -1, 0, 1};
  store.at(d.b_id).value = {0.5, -0.5};
  const double x[3] = {1.0, -1.0, 2.0};
  double y[2];
  dense_forward(store, d, x, y);
  CHECK(y[0] == Catch::Approx(1 - 2 + 6 + 0.5));
  CHECK(y[1] == Catch::Approx(-1 + 2 - 0.5));
}

TEST_CASE("checkpoint container round trip and mismatch detection") {
  ParamStore<float> store;
  store.add("a.w", {2, 3});
  store.add("a.b", {3});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (int p = 0; p < store.count(); ++p)
    for (float& v : store.at(p).value) v = u(rng);
  const std::string path = "net_test.bin";
  save_params(store, path);

  ParamStore<float> back;
  back.add("a.w", {2, 3});
  back.add("a.b", {3});
  load_params(back, path);
  for (int p = 0; p < store.count(); ++p)
    CHECK(back.at(p).value == store.at(p).value);

  ParamStore<float> wrong;
  wrong.add("a.w", {3, 2});
  wrong.add("a.b", {3});
  CHECK_THROWS_AS(load_params(wrong, path), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_params(back, path), std::runtime_error);
}

namespace {

Observation random_obs(int misc, int req, int veh, int pair, int f_max, int k,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Observation obs;
  obs.f_max = f_max;
  obs.active = f_max;
  obs.customers = f_max;
  obs.vehicles = k;
  obs.misc_dim = misc;
  obs.req_dim = req;
  obs.veh_dim = veh;
  obs.pair_dim = pair;
  obs.misc.resize(misc);
  obs.req.resize(static_cast<size_t>(f_max) * req);
  obs.veh.resize(static_cast<size_t>(k) * veh);
  obs.pair.resize(static_cast<size_t>(k) * f_max * pair);
  obs.valid.assign(f_max, 1);
  for (double& v : obs.misc) v = u(rng);
  for (double& v : obs.req) v = u(rng);
  for (double& v : obs.veh) v = u(rng);
  for (double& v : obs.pair) v = u(rng);
  return obs;
}

// Central finite-difference check of dL/dtheta for L = sum(dout .* out).
double max_rel_error(PolicyNet<double>& net, const Observation& obs,
                     const std::vector<double>& dout, std::mt19937_64& rng) {
  typename PolicyNet<double>::Cache cache;
  net.params().zero_grads();
  net.forward(obs, &cache);
  net.backward(obs, cache, dout);

  auto loss = [&]() {
    const std::vector<double> out = net.forward(obs);
    double l = 0.0;
    for (size_t i = 0; i < out.size(); ++i) l += dout[i] * out[i];
    return l;
  };

  const double h = 1e-6;
  double worst = 0.0;
  for (int p = 0; p < net.params().count(); ++p) {
    ParamArray<double>& pa = net.params().at(p);
    const size_t n = pa.size();
    const size_t samples = std::min<size_t>(n, 25);
    for (size_t s = 0; s < samples; ++s) {
      const size_t i = rng() % n;
      const double keep = pa.value[i];
      pa.value[i] = keep + h;
      const double lp = loss();
      pa.value[i] = keep - h;
      const double lm = loss();
      pa.value[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double an = pa.grad[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("network gradients pass central finite-difference checks") {
  NetTopology topo;
  topo.embedding = 8;
  topo.trunk = {8, 8};
  topo.head = {16, 8};
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const int misc = 3, req = 5, veh = 4, pair = 1, f_max = 3, k = 2;
  const Observation obs = random_obs(misc, req, veh, pair, f_max, k, rng);

  SECTION("softmax head (actor graph)") {
    PolicyNet<double> net(misc, req, veh, pair, f_max, k, true, topo);
    net.init(3);
    std::vector<double> dout(static_cast<size_t>(k) * (f_max + 1));
    for (double& v : dout) v = u(rng);
    CHECK(max_rel_error(net, obs, dout, rng) < 1e-4);
  }
  SECTION("linear head (critic graph)") {
    PolicyNet<double> net(misc, req, veh, pair, f_max, k, false, topo);
    net.init(4);
    std::vector<double> dout(static_cast<size_t>(k) * (f_max + 1));
    for (double& v : dout) v = u(rng);
    CHECK(max_rel_error(net, obs, dout, rng) < 1e-4);
  }
}

TEST_CASE("actor output rows are probability distributions") {
  NetTopology topo;
  topo.embedding = 8;
  topo.trunk = {8};
  topo.head = {8};
  PolicyNet<float> net(3, 5, 4, 1, 4, 3, true, topo);
  net.init(8);
  std::mt19937_64 rng(2);
  const Observation obs = random_obs(3, 5, 4, 1, 4, 3, rng);
  const std::vector<float> out = net.forward(obs);
  REQUIRE(out.size() == 3u * 5u);
  for (int j = 0; j < 3; ++j) {
    float sum = 0.0f;
    for (int a = 0; a < 5; ++a) {
      CHECK(out[j * 5 + a] >= 0.0f);
      sum += out[j * 5 + a];
    }
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("deterministic init and forward") {
  NetTopology topo;
  topo.embedding = 8;
  topo.trunk = {8};
  topo.head = {8};
  PolicyNet<float> a(3, 5, 4, 1, 4, 3, true, topo);
  PolicyNet<float> b(3, 5, 4, 1, 4, 3, true, topo);
  a.init(42);
  b.init(42);
  std::mt19937_64 rng(4);
  const Observation obs = random_obs(3, 5, 4, 1, 4, 3, rng);
  CHECK(a.forward(obs) == b.forward(obs));
}
