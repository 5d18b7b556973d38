#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tubuda/random.hpp"
#include "tubuda/tensor.hpp"

namespace tubuda {

enum class Mode { train, eval };

/// Named, checkpointable collection of the tensors of one network:
/// trainable parameters plus non-trainable buffers (batch-norm running
/// statistics). Names are unique within a store.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Tensor add_param(const std::string& name, Shape shape, std::vector<double> init);
  Tensor add_buffer(const std::string& name, Shape shape, std::vector<double> init);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  const Tensor& get(const std::string& name) const;
  std::size_t parameter_count() const;

  void zero_grad();

  /// Binary checkpoint: one line of compact JSON header
  /// {"format":"tubuda-checkpoint","version":1,"total":N,
  ///  "entries":[{"name","kind","offset","shape"}]} terminated by '\n',
  /// followed by N little-endian float32 values.
  void save(const std::filesystem::path& path) const;
  /// Overwrites the values of every entry from a checkpoint; names and
  /// shapes must match exactly.
  void load(const std::filesystem::path& path);

 private:
  Tensor add(const std::string& name, Shape shape, std::vector<double> init, bool trainable);
  std::vector<Entry> entries_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initial values.
std::vector<double> uniform_init(std::size_t count, int fan_in, Rng& rng);

struct Conv2d {
  Tensor weight;  // [co, ci, k, k]
  Tensor bias;    // [co] or undefined
  int stride = 1;
  int pad = 0;

  Tensor operator()(const Tensor& x) const;
};

/// `pad < 0` selects "same" padding k / 2.
Conv2d make_conv(ParamStore& store, const std::string& name, int ci, int co, int k, Rng& rng,
                 bool bias = true, int stride = 1, int pad = -1);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined

  Tensor operator()(const Tensor& x) const;
};

Linear make_linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                   bool bias = true);

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  Tensor operator()(const Tensor& x, Mode mode) const;
};

BatchNorm make_batchnorm(ParamStore& store, const std::string& name, int channels);

}  // namespace tubuda
