#pragma once

// Minimal dense-network engine: forward pass, reverse-mode gradients, Adam
// with global-norm clipping, Huber loss, EMA target updates and a binary
// checkpoint container. Templated on the scalar so training runs in 32-bit
// while gradient checks run in 64-bit.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace amod {

enum class Act { none, relu, softmax };

template <typename T>
struct ParamArray {
  std::string name;
  std::vector<int> dims;
  std::vector<T> value;
  std::vector<T> grad;

  size_t size() const { return value.size(); }
};

template <typename T>
class ParamStore {
 public:
  int add(std::string name, std::vector<int> dims) {
    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    ParamArray<T> p;
    p.name = std::move(name);
    p.dims = std::move(dims);
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  }

  ParamArray<T>& at(int id) { return params_.at(id); }
  const ParamArray<T>& at(int id) const { return params_.at(id); }
  int count() const { return static_cast<int>(params_.size()); }

  void zero_grads() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  // Gradient of the penalty coef * sum(w^2), applied to every array.
  void add_l2_grads(T coef) {
    for (auto& p : params_)
      for (size_t i = 0; i < p.size(); ++i) p.grad[i] += T(2) * coef * p.value[i];
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
      for (T g : p.grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  bool grads_finite() const {
    for (const auto& p : params_)
      for (T g : p.grad)
        if (!std::isfinite(static_cast<double>(g))) return false;
    return true;
  }

  void scale_grads(T s) {
    for (auto& p : params_)
      for (T& g : p.grad) g *= s;
  }

 private:
  std::vector<ParamArray<T>> params_;
};

// ---------------------------------------------------------------------------
// Dense layer primitives

template <typename T>
inline void matvec_bias(const T* w, const T* x, const T* b, T* y, int out,
                        int in) {
  for (int o = 0; o < out; ++o) {
    const T* row = w + static_cast<size_t>(o) * in;
    T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
    int i = 0;
    for (; i + 4 <= in; i += 4) {
      a0 += row[i] * x[i];
      a1 += row[i + 1] * x[i + 1];
      a2 += row[i + 2] * x[i + 2];
      a3 += row[i + 3] * x[i + 3];
    }
    for (; i < in; ++i) a0 += row[i] * x[i];
    y[o] = a0 + a1 + a2 + a3 + b[o];
  }
}

template <typename T>
inline void softmax_inplace(T* y, int n) {
  T mx = y[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, y[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(y[i] - mx);
    sum += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= sum;
}

template <typename T>
struct Dense {
  int w_id = -1;
  int b_id = -1;
  int in = 0;
  int out = 0;
  Act act = Act::relu;
};

template <typename T>
inline Dense<T> make_dense(ParamStore<T>& store, const std::string& name,
                           int in, int out, Act act) {
  Dense<T> d;
  d.in = in;
  d.out = out;
  d.act = act;
  d.w_id = store.add(name + ".w", {out, in});
  d.b_id = store.add(name + ".b", {out});
  return d;
}

// He-uniform for ReLU layers, Xavier-uniform otherwise.
template <typename T>
inline void init_dense(ParamStore<T>& store, const Dense<T>& d,
                       std::mt19937_64& rng) {
  const double limit = d.act == Act::relu
                           ? std::sqrt(6.0 / d.in)
                           : std::sqrt(6.0 / (d.in + d.out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (T& v : store.at(d.w_id).value) v = static_cast<T>(u(rng));
}

// y = act(Wx + b); y must hold `out` values. x must stay alive for backward.
template <typename T>
inline void dense_forward(const ParamStore<T>& store, const Dense<T>& d,
                          const T* x, T* y) {
  if (d.in <= 0 || d.out <= 0) throw std::logic_error("dense_forward: bad shape");
  matvec_bias(store.at(d.w_id).value.data(), x, store.at(d.b_id).value.data(), y,
              d.out, d.in);
  if (d.act == Act::relu) {
    for (int i = 0; i < d.out; ++i)
      if (y[i] < T(0)) y[i] = T(0);
  } else if (d.act == Act::softmax) {
    softmax_inplace(y, d.out);
  }
}

// Accumulates parameter gradients; writes dL/dx into dx (may be null).
// x and y are the cached forward input and (post-activation) output.
template <typename T>
inline void dense_backward(ParamStore<T>& store, const Dense<T>& d, const T* x,
                           const T* y, const T* dy, T* dx) {
  std::vector<T> dz(d.out);
  if (d.act == Act::relu) {
    for (int i = 0; i < d.out; ++i) dz[i] = y[i] > T(0) ? dy[i] : T(0);
  } else if (d.act == Act::softmax) {
    T dot = T(0);
    for (int i = 0; i < d.out; ++i) dot += y[i] * dy[i];
    for (int i = 0; i < d.out; ++i) dz[i] = y[i] * (dy[i] - dot);
  } else {
    std::copy(dy, dy + d.out, dz.begin());
  }
  ParamArray<T>& w = store.at(d.w_id);
  ParamArray<T>& b = store.at(d.b_id);
  for (int o = 0; o < d.out; ++o) {
    T* wg = w.grad.data() + static_cast<size_t>(o) * d.in;
    const T g = dz[o];
    for (int i = 0; i < d.in; ++i) wg[i] += g * x[i];
    b.grad[o] += g;
  }
  if (dx) {
    std::fill(dx, dx + d.in, T(0));
    const T* wv = w.value.data();
    for (int o = 0; o < d.out; ++o) {
      const T g = dz[o];
      const T* row = wv + static_cast<size_t>(o) * d.in;
      for (int i = 0; i < d.in; ++i) dx[i] += g * row[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Huber loss

template <typename T>
struct HuberResult {
  T value;
  T dpred;
};

template <typename T>
inline HuberResult<T> huber(T pred, T target, T delta = T(10)) {
  if (delta <= T(0)) throw std::invalid_argument("huber: delta must be positive");
  const T e = pred - target;
  const T ae = std::abs(e);
  if (ae <= delta) return {T(0.5) * e * e, e};
  return {delta * (ae - T(0.5) * delta), e > T(0) ? delta : -delta};
}

// ---------------------------------------------------------------------------
// Adam with global-norm clipping

template <typename T>
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<T>> m, v;
};

// Returns false (and leaves parameters untouched) on non-finite gradients.
template <typename T>
inline bool adam_step(ParamStore<T>& store, AdamState<T>& st,
                      double clip_norm = 10.0) {
  if (!store.grads_finite()) return false;
  if (st.m.empty()) {
    st.m.resize(store.count());
    st.v.resize(store.count());
    for (int i = 0; i < store.count(); ++i) {
      st.m[i].assign(store.at(i).size(), T(0));
      st.v[i].assign(store.at(i).size(), T(0));
    }
  }
  const double norm = store.grad_norm();
  if (clip_norm > 0.0 && norm > clip_norm)
    store.scale_grads(static_cast<T>(clip_norm / norm));
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, st.step);
  const double bc2 = 1.0 - std::pow(st.beta2, st.step);
  for (int p = 0; p < store.count(); ++p) {
    ParamArray<T>& pa = store.at(p);
    for (size_t i = 0; i < pa.size(); ++i) {
      const double g = pa.grad[i];
      st.m[p][i] = static_cast<T>(st.beta1 * st.m[p][i] + (1.0 - st.beta1) * g);
      st.v[p][i] = static_cast<T>(st.beta2 * st.v[p][i] + (1.0 - st.beta2) * g * g);
      const double mhat = st.m[p][i] / bc1;
      const double vhat = st.v[p][i] / bc2;
      pa.value[i] -= static_cast<T>(st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
  return true;
}

// theta_bar' = (1 - rho) * theta_bar + rho * theta
template <typename T>
inline void ema_update(ParamStore<T>& target, const ParamStore<T>& online,
                       double rho) {
  if (target.count() != online.count())
    throw std::invalid_argument("ema_update: store mismatch");
  for (int p = 0; p < target.count(); ++p) {
    ParamArray<T>& t = target.at(p);
    const ParamArray<T>& o = online.at(p);
    for (size_t i = 0; i < t.size(); ++i)
      t.value[i] = static_cast<T>((1.0 - rho) * t.value[i] + rho * o.value[i]);
  }
}

template <typename T>
inline void copy_params(ParamStore<T>& dst, const ParamStore<T>& src) {
  if (dst.count() != src.count())
    throw std::invalid_argument("copy_params: store mismatch");
  for (int p = 0; p < dst.count(); ++p) dst.at(p).value = src.at(p).value;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic AMODNET1, then per array
// (u32 name length, name bytes, u8 dtype = 0 for f32, u32 rank, u32 dims...,
//  raw little-endian 32-bit values).

template <typename T>
inline void save_params(const ParamStore<T>& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("AMODNET1", 8);
  for (int p = 0; p < store.count(); ++p) {
    const ParamArray<T>& pa = store.at(p);
    const std::uint32_t nl = static_cast<std::uint32_t>(pa.name.size());
    out.write(reinterpret_cast<const char*>(&nl), 4);
    out.write(pa.name.data(), nl);
    const std::uint8_t dtype = 0;
    out.write(reinterpret_cast<const char*>(&dtype), 1);
    const std::uint32_t rank = static_cast<std::uint32_t>(pa.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : pa.dims) {
      const std::uint32_t dd = static_cast<std::uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&dd), 4);
    }
    for (T v : pa.value) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
}

template <typename T>
inline void load_params(ParamStore<T>& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "AMODNET1", 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  int loaded = 0;
  while (true) {
    std::uint32_t nl = 0;
    in.read(reinterpret_cast<char*>(&nl), 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) throw std::runtime_error("truncated checkpoint");
    std::string name(nl, '\0');
    in.read(name.data(), nl);
    std::uint8_t dtype;
    in.read(reinterpret_cast<char*>(&dtype), 1);
    if (dtype != 0) throw std::runtime_error("unsupported dtype in checkpoint");
    std::uint32_t rank;
    in.read(reinterpret_cast<char*>(&rank), 4);
    std::vector<int> dims(rank);
    size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d;
      in.read(reinterpret_cast<char*>(&d), 4);
      dims[i] = static_cast<int>(d);
      n *= d;
    }
    ParamArray<T>* target = nullptr;
    for (int p = 0; p < store.count(); ++p)
      if (store.at(p).name == name) target = &store.at(p);
    if (!target || target->size() != n || target->dims != dims)
      throw std::runtime_error("checkpoint array mismatch: " + name);
    for (size_t i = 0; i < n; ++i) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      target->value[i] = static_cast<T>(f);
    }
    ++loaded;
  }
  if (loaded != store.count())
    throw std::runtime_error("checkpoint missing arrays");
}

}  // namespace amod
