#pragma once

// Named parameter storage, a few layer building blocks, and Adam.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skelmae/autodiff.hpp"
#include "skelmae/core.hpp"

namespace skelmae::nn {

using ad::Shape;
using ad::Var;

struct NamedParam {
  std::string name;
  Var var;
  bool trainable = true;
};

/// Ordered registry of leaf tensors. Registration order is stable, which
/// keeps checkpoint layout and optimizer state deterministic.
class ParamSet {
 public:
  Var add(const std::string& name, Shape shape, std::vector<double> init, bool trainable = true) {
    for (const auto& p : params_)
      require(p.name != name, ErrorCode::invalid_argument, "duplicate parameter name " + name);
    Var v = Var::leaf(std::move(shape), std::move(init), trainable);
    params_.push_back({name, v, trainable});
    return v;
  }

  const std::vector<NamedParam>& all() const { return params_; }

  std::vector<Var> trainable() const {
    std::vector<Var> out;
    for (const auto& p : params_)
      if (p.trainable) out.push_back(p.var);
    return out;
  }

  void set_trainable(const std::string& prefix, bool on) {
    for (auto& p : params_)
      if (p.name.rfind(prefix, 0) == 0) {
        p.trainable = on;
        p.var.set_requires_grad(on);
      }
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
  }

  std::string digest(const std::string& prefix = "") const {
    Digest d;
    for (const auto& p : params_) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      d.str(p.name).f64s(p.var.value());
    }
    return d.hex();
  }

  const NamedParam* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

 private:
  std::vector<NamedParam> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline std::vector<double> fan_in_uniform(std::size_t n, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

inline std::vector<double> normal_init(std::size_t n, double stddev, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return v;
}

struct Linear {
  Var w, b;
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in_dim, int out_dim, Rng& rng, bool bias = true)
      : in(in_dim), out(out_dim) {
    const auto n = static_cast<std::size_t>(in_dim) * static_cast<std::size_t>(out_dim);
    w = ps.add(name + ".weight", {in_dim, out_dim}, fan_in_uniform(n, in_dim, rng));
    if (bias)
      b = ps.add(name + ".bias", {out_dim}, fan_in_uniform(static_cast<std::size_t>(out_dim), in_dim, rng));
  }

  Var operator()(const Var& x) const { return ad::linear(x, w, b); }
};

struct LayerNorm {
  Var gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamSet& ps, const std::string& name, int dim) {
    gamma = ps.add(name + ".gamma", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 1.0));
    beta = ps.add(name + ".beta", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  }

  Var operator()(const Var& x) const { return ad::layer_norm(x, gamma, beta); }
};

struct PReLU {
  Var slope;

  PReLU() = default;
  PReLU(ParamSet& ps, const std::string& name, int channels) {
    slope = ps.add(name + ".slope", {channels}, std::vector<double>(static_cast<std::size_t>(channels), 0.25));
  }

  Var operator()(const Var& x) const { return ad::prelu(x, slope); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(double lr_scale = 1.0) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.lr * lr_scale;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Var& p = params_[k];
      const auto& g = p.grad();
      if (g.empty()) continue;
      auto& val = p.mutable_value();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        val[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long steps() const { return t_; }

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace skelmae::nn
