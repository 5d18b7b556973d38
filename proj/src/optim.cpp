#include "tubuda/optim.hpp"

#include <cmath>

#include "tubuda/error.hpp"

namespace tubuda {

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam moments must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, int t, const OptimConfig& cfg) {
  if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
    throw InvalidArgument("adam_update: state sizes do not match the parameter");
  }
  if (t < 1) throw InvalidArgument("adam_update: step count must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double grad = g[i] + cfg.weight_decay * w[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void Adam::add(const ParamStore& store) {
  for (const Tensor& p : store.trainable()) {
    slots_.push_back({p, std::vector<double>(p.numel(), 0.0), std::vector<double>(p.numel(), 0.0)});
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void Adam::step() {
  ++t_;
  for (auto& s : slots_) {
    Tensor p = s.param;
    // Parameters that took no part in the graph are left untouched.
    if (!p.has_grad()) continue;
    adam_update(p.data(), p.grad(), s.m, s.v, t_, cfg_);
  }
}

}  // namespace tubuda
