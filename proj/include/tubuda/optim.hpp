#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tubuda/nn.hpp"

namespace tubuda {

struct OptimConfig {
  double lr = 0.01;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 500;
  int batch_size = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One Adam update on raw buffers. Weight decay enters as an additive
/// weight_decay * w term on the gradient; `t` is the 1-based step count.
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, int t, const OptimConfig& cfg);

/// Adam over the trainable tensors of one or more stores, visited in
/// registration order.
class Adam {
 public:
  explicit Adam(OptimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void add(const ParamStore& store);
  void zero_grad();
  void step();
  int steps_taken() const { return t_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  OptimConfig cfg_;
  std::vector<Slot> slots_;
  int t_ = 0;
};

}  // namespace tubuda
