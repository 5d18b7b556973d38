#include "tubuda/losses.hpp"

#include <cmath>
#include <string>

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"

namespace tubuda {

void LossWeights::validate() const {
  for (double m : mu) {
    if (!(m >= 0.0)) throw ConfigError("loss weights mu must all be >= 0");
  }
}

bool LossWeights::all_zero() const {
  for (double m : mu) {
    if (m != 0.0) return false;
  }
  return true;
}

namespace {

void check_finite(const LossReport& r) {
  auto check = [](double v, const std::string& name) {
    if (!std::isfinite(v)) throw NumericError(name, "non-finite loss component " + name);
  };
  check(r.seg, "seg");
  for (int k = 0; k < 3; ++k) check(r.source[k], "source_d" + std::to_string(k + 1));
  for (int k = 0; k < 3; ++k) check(r.target[k], "target_d" + std::to_string(k + 1));
  check(r.ls, "ls");
  check(r.lt, "lt");
  check(r.total, "total");
}

}  // namespace

LossReport compose_losses(const LossTerms& t, const LossWeights& w) {
  LossReport r;
  r.seg = t.seg;
  r.source = t.source;
  r.target = t.target;
  const auto& m = w.mu;
  r.ls = t.seg + ((m[0] * t.source[0] + m[1] * t.source[1]) + m[2] * t.source[2]);
  r.lt = (m[3] * t.target[0] + m[4] * t.target[1]) + m[5] * t.target[2];
  r.total = r.ls + r.lt;
  check_finite(r);
  return r;
}

GraphLoss compose_losses(const Tensor& seg, const std::array<Tensor, 3>& source,
                         const std::array<Tensor, 3>& target, const LossWeights& w) {
  auto term = [](const Tensor& t) { return t.defined() ? t : Tensor::scalar(0.0); };
  std::array<Tensor, 3> s, tg;
  for (int k = 0; k < 3; ++k) {
    s[k] = term(source[k]);
    tg[k] = term(target[k]);
  }
  const auto& m = w.mu;
  GraphLoss g;
  g.ls = ops::add(seg, ops::add(ops::add(ops::scale(s[0], m[0]), ops::scale(s[1], m[1])), ops::scale(s[2], m[2])));
  g.lt = ops::add(ops::add(ops::scale(tg[0], m[3]), ops::scale(tg[1], m[4])), ops::scale(tg[2], m[5]));
  g.total = ops::add(g.ls, g.lt);
  LossReport& r = g.report;
  r.seg = seg.item();
  for (int k = 0; k < 3; ++k) {
    r.source[k] = s[k].item();
    r.target[k] = tg[k].item();
  }
  r.ls = g.ls.item();
  r.lt = g.lt.item();
  r.total = g.total.item();
  check_finite(r);
  return g;
}

nlohmann::json LossReport::to_json() const {
  return {{"step", step}, {"seg", seg}, {"source_d", source}, {"target_d", target},
          {"ls", ls},     {"lt", lt},   {"total", total}};
}

}  // namespace tubuda
