#include "tubuda/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"

namespace tubuda {

using nlohmann::json;

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> init,
                       bool trainable) {
  for (const auto& e : entries_) {
    if (e.name == name) throw InvalidArgument("duplicate parameter name '" + name + "'");
  }
  Tensor t = Tensor::from(std::move(shape), std::move(init), trainable);
  entries_.push_back({name, t, trainable});
  return t;
}

Tensor ParamStore::add_param(const std::string& name, Shape shape, std::vector<double> init) {
  return add(name, std::move(shape), std::move(init), true);
}

Tensor ParamStore::add_buffer(const std::string& name, Shape shape, std::vector<double> init) {
  return add(name, std::move(shape), std::move(init), false);
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw InvalidArgument("no parameter named '" + name + "'");
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  json header = {{"format", "tubuda-checkpoint"}, {"version", 1}};
  json list = json::array();
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    list.push_back({{"name", e.name},
                    {"kind", e.trainable ? "param" : "buffer"},
                    {"offset", offset},
                    {"shape", e.tensor.shape()}});
    offset += e.tensor.numel();
  }
  header["entries"] = std::move(list);
  header["total"] = offset;

  std::vector<float> payload;
  payload.reserve(offset);
  for (const auto& e : entries_) {
    for (double v : e.tensor.data()) payload.push_back(static_cast<float>(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

void ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
    if (header.at("format") != "tubuda-checkpoint") throw IoError("not a tubuda checkpoint");
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }
  const std::size_t total = header.at("total").get<std::size_t>();
  std::vector<float> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != total * sizeof(float)) {
    throw IoError("truncated checkpoint '" + path.string() + "'");
  }
  for (auto& e : entries_) {
    const json* found = nullptr;
    for (const auto& j : header.at("entries")) {
      if (j.at("name") == e.name) found = &j;
    }
    if (!found) throw IoError("checkpoint '" + path.string() + "' lacks '" + e.name + "'");
    const Shape shape = found->at("shape").get<Shape>();
    if (shape != e.tensor.shape()) {
      throw IoError("checkpoint shape " + shape_str(shape) + " for '" + e.name +
                    "' does not match " + shape_str(e.tensor.shape()));
    }
    const std::size_t offset = found->at("offset").get<std::size_t>();
    if (offset + e.tensor.numel() > total) throw IoError("checkpoint entry '" + e.name + "' out of bounds");
    auto dst = e.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = payload[offset + i];
  }
}

std::vector<double> uniform_init(std::size_t count, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  Tensor y = ops::conv2d(x, weight, stride, pad);
  return bias.defined() ? ops::add_bias(y, bias) : y;
}

Conv2d make_conv(ParamStore& store, const std::string& name, int ci, int co, int k, Rng& rng,
                 bool bias, int stride, int pad) {
  Conv2d c;
  const int fan_in = ci * k * k;
  c.weight = store.add_param(name + ".weight", {co, ci, k, k},
                             uniform_init(static_cast<std::size_t>(co) * ci * k * k, fan_in, rng));
  if (bias) c.bias = store.add_param(name + ".bias", {co}, uniform_init(co, fan_in, rng));
  c.stride = stride;
  c.pad = pad < 0 ? k / 2 : pad;
  return c;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ops::linear(x, weight);
  return bias.defined() ? ops::add_bias(y, bias) : y;
}

Linear make_linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool bias) {
  Linear l;
  l.weight = store.add_param(name + ".weight", {out, in},
                             uniform_init(static_cast<std::size_t>(out) * in, in, rng));
  if (bias) l.bias = store.add_param(name + ".bias", {out}, uniform_init(out, in, rng));
  return l;
}

Tensor BatchNorm::operator()(const Tensor& x, Mode mode) const {
  Tensor rm = running_mean;
  Tensor rv = running_var;
  return ops::batchnorm(x, gamma, beta, rm, rv, mode == Mode::train, momentum, eps);
}

BatchNorm make_batchnorm(ParamStore& store, const std::string& name, int channels) {
  BatchNorm bn;
  const auto c = static_cast<std::size_t>(channels);
  bn.gamma = store.add_param(name + ".gamma", {channels}, std::vector<double>(c, 1.0));
  bn.beta = store.add_param(name + ".beta", {channels}, std::vector<double>(c, 0.0));
  bn.running_mean = store.add_buffer(name + ".running_mean", {channels}, std::vector<double>(c, 0.0));
  bn.running_var = store.add_buffer(name + ".running_var", {channels}, std::vector<double>(c, 1.0));
  return bn;
}

}  // namespace tubuda
