#include "tubuda/run_config.hpp"

#include <fstream>

#include "tubuda/error.hpp"

namespace tubuda {

using nlohmann::json;

WidthPreset parse_preset(const std::string& s) {
  if (s == "desk") return WidthPreset::desk;
  if (s == "full") return WidthPreset::full;
  throw ConfigError("unknown preset '" + s + "' (expected desk or full)");
}

const char* to_string(WidthPreset p) { return p == WidthPreset::full ? "full" : "desk"; }

namespace {

WeightActivation parse_activation(const std::string& s) {
  if (s == "sigmoid") return WeightActivation::sigmoid;
  if (s == "softmax") return WeightActivation::softmax;
  throw ConfigError("unknown activation '" + s + "' (expected sigmoid or softmax)");
}

const char* to_string(WeightActivation a) { return a == WeightActivation::softmax ? "softmax" : "sigmoid"; }

Polarity parse_polarity(const std::string& s) {
  if (s == "dark_on_bright") return Polarity::dark_on_bright;
  if (s == "bright_on_dark") return Polarity::bright_on_dark;
  throw ConfigError("unknown polarity '" + s + "'");
}

const char* to_string(Polarity p) { return p == Polarity::bright_on_dark ? "bright_on_dark" : "dark_on_bright"; }

json domain_json(const DomainParams& d) {
  return {{"blur", d.blur},         {"noise", d.noise},           {"contrast", d.contrast},
          {"degrade", d.degrade},   {"extra_blur", d.extra_blur}, {"shift", d.shift}};
}

DomainParams domain_from(const json& j) {
  DomainParams d;
  d.blur = j.at("blur").get<double>();
  d.noise = j.at("noise").get<double>();
  d.contrast = j.at("contrast").get<double>();
  d.degrade = j.at("degrade").get<int>();
  d.extra_blur = j.at("extra_blur").get<double>();
  d.shift = j.at("shift").get<double>();
  return d;
}

json optim_json(const OptimConfig& o) {
  return {{"lr", o.lr},       {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
          {"beta2", o.beta2}, {"eps", o.eps},                   {"steps", o.steps},
          {"batch_size", o.batch_size}, {"seed", o.seed}};
}

OptimConfig optim_from(const json& j) {
  OptimConfig o;
  o.lr = j.at("lr").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.eps = j.at("eps").get<double>();
  o.steps = j.at("steps").get<int>();
  o.batch_size = j.at("batch_size").get<int>();
  o.seed = j.at("seed").get<std::uint64_t>();
  return o;
}

json hybrid_json(const HybridConfig& h) {
  return {{"beta", h.beta},
          {"n", h.n},
          {"preset", to_string(h.preset)},
          {"activation", to_string(h.activation)},
          {"zero_init_head", h.zero_init_head}};
}

HybridConfig hybrid_from(const json& j) {
  HybridConfig h;
  h.beta = j.at("beta").get<double>();
  h.n = j.at("n").get<int>();
  h.preset = parse_preset(j.at("preset").get<std::string>());
  h.activation = parse_activation(j.at("activation").get<std::string>());
  h.zero_init_head = j.at("zero_init_head").get<bool>();
  return h;
}

// Every key of `patch` must exist in `schema` with a compatible kind.
void check_keys(const json& schema, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& s = schema.at(it.key());
    if (it.value().is_null()) throw ConfigError("config key '" + key + "' is null");
    if (s.is_object()) {
      check_keys(s, it.value(), key);
    } else if (s.is_number() != it.value().is_number() || s.is_string() != it.value().is_string() ||
               s.is_boolean() != it.value().is_boolean() || s.is_array() != it.value().is_array()) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.preset = parse_preset(j.at("preset").get<std::string>());

  const json& s = j.at("synth");
  c.synth.seed = s.at("seed").get<std::uint64_t>();
  c.synth.size = s.at("size").get<int>();
  c.synth.cells = s.at("cells").get<int>();
  c.synth.thickness = s.at("thickness").get<int>();
  c.synth.a = domain_from(s.at("a"));
  c.synth.b = domain_from(s.at("b"));
  c.synth.source_train = s.at("source_train").get<int>();
  c.synth.target_train = s.at("target_train").get<int>();
  c.synth.source_test = s.at("source_test").get<int>();
  c.synth.target_test = s.at("target_test").get<int>();

  const json& v = j.at("vesselness");
  c.vesselness.scales = v.at("scales").get<std::vector<double>>();
  c.vesselness.frangi_b = v.at("frangi_b").get<double>();
  c.vesselness.frangi_c = v.at("frangi_c").get<double>();
  c.vesselness.jerman_tau = v.at("jerman_tau").get<double>();
  c.vesselness.polarity = parse_polarity(v.at("polarity").get<std::string>());

  c.sr_hybrid = hybrid_from(j.at("sr_hybrid"));
  const json& sr = j.at("sr");
  c.sr.eta = sr.at("eta").get<double>();
  c.sr.scale_factor = sr.at("scale_factor").get<int>();
  c.sr.n_blocks = sr.at("n_blocks").get<int>();
  c.sr.preset = parse_preset(sr.at("preset").get<std::string>());
  c.sr.degrade_factor = sr.at("degrade_factor").get<int>();

  const json& st = j.at("sr_train");
  c.sr_train.optim = optim_from(st.at("optim"));
  c.sr_train.crop = st.at("crop").get<int>();
  c.sr_train.augment = st.at("augment").get<bool>();

  const json& g = j.at("seg");
  c.seg.hybrid = hybrid_from(g.at("hybrid"));
  c.seg.unet.in_channels = g.at("unet").at("in_channels").get<int>();
  c.seg.unet.base = g.at("unet").at("base").get<int>();
  c.seg.unet.levels = g.at("unet").at("levels").get<int>();
  c.seg.disc.channels = g.at("disc").at("channels").get<int>();
  c.seg.disc.d = g.at("disc").at("d").get<int>();
  c.seg.disc.nonlocal = g.at("disc").at("nonlocal").get<bool>();
  c.seg.disc.orthogonal_heads = g.at("disc").at("orthogonal_heads").get<bool>();
  c.seg.use_hfi = g.at("use_hfi").get<bool>();
  c.seg.use_hrg = g.at("use_hrg").get<bool>();
  c.seg.grl_lambda = g.at("grl_lambda").get<double>();
  const auto mu = g.at("mu").get<std::vector<double>>();
  if (mu.size() != 6) throw ConfigError("config key 'seg.mu' needs exactly 6 weights");
  std::copy(mu.begin(), mu.end(), c.seg.weights.mu.begin());
  c.seg.optim = optim_from(g.at("optim"));
  c.seg.augment = g.at("augment").get<bool>();
  return c;
}

}  // namespace

RunConfig::RunConfig() {
  sr.scale_factor = 1;
  sr_train.optim.steps = 200;
  sr_train.optim.lr = 0.001;
  sr_train.crop = 32;
  apply_preset(preset);
  apply_seed(seed);
}

void RunConfig::apply_preset(WidthPreset p) {
  preset = p;
  sr_hybrid.preset = p;
  seg.hybrid.preset = p;
  sr.preset = p;
  seg.unet.base = p == WidthPreset::full ? 64 : 8;
  seg.disc.d = p == WidthPreset::full ? 256 : 64;
  seg.disc.channels = seg.unet.bottleneck_channels();
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  sr_train.optim.seed = s;
  seg.optim.seed = s;
}

void RunConfig::validate() const {
  synth.validate();
  vesselness.validate();
  sr_hybrid.validate();
  sr.validate();
  sr_train.optim.validate();
  if (sr_train.crop < 0) throw ConfigError("sr_train.crop must be >= 0");
  seg.validate();
}

json to_json(const RunConfig& c) {
  const VesselnessParams& v = c.vesselness;
  return {
      {"seed", c.seed},
      {"preset", to_string(c.preset)},
      {"synth",
       {{"seed", c.synth.seed},
        {"size", c.synth.size},
        {"cells", c.synth.cells},
        {"thickness", c.synth.thickness},
        {"a", domain_json(c.synth.a)},
        {"b", domain_json(c.synth.b)},
        {"source_train", c.synth.source_train},
        {"target_train", c.synth.target_train},
        {"source_test", c.synth.source_test},
        {"target_test", c.synth.target_test}}},
      {"vesselness",
       {{"scales", v.scales},
        {"frangi_b", v.frangi_b},
        {"frangi_c", v.frangi_c},
        {"jerman_tau", v.jerman_tau},
        {"polarity", to_string(v.polarity)}}},
      {"sr_hybrid", hybrid_json(c.sr_hybrid)},
      {"sr",
       {{"eta", c.sr.eta},
        {"scale_factor", c.sr.scale_factor},
        {"n_blocks", c.sr.n_blocks},
        {"preset", to_string(c.sr.preset)},
        {"degrade_factor", c.sr.degrade_factor}}},
      {"sr_train", {{"optim", optim_json(c.sr_train.optim)}, {"crop", c.sr_train.crop}, {"augment", c.sr_train.augment}}},
      {"seg",
       {{"hybrid", hybrid_json(c.seg.hybrid)},
        {"unet", {{"in_channels", c.seg.unet.in_channels}, {"base", c.seg.unet.base}, {"levels", c.seg.unet.levels}}},
        {"disc",
         {{"channels", c.seg.disc.channels},
          {"d", c.seg.disc.d},
          {"nonlocal", c.seg.disc.nonlocal},
          {"orthogonal_heads", c.seg.disc.orthogonal_heads}}},
        {"use_hfi", c.seg.use_hfi},
        {"use_hrg", c.seg.use_hrg},
        {"grl_lambda", c.seg.grl_lambda},
        {"mu", c.seg.weights.mu},
        {"optim", optim_json(c.seg.optim)},
        {"augment", c.seg.augment}}},
  };
}

RunConfig merge_run_config(const RunConfig& base, const json& patch) {
  RunConfig start = base;
  json schema = to_json(start);
  check_keys(schema, patch, "");
  try {
    // Preset and seed fan out first so explicit keys in the patch win.
    if (patch.contains("preset")) start.apply_preset(parse_preset(patch.at("preset").get<std::string>()));
    if (patch.contains("seed")) start.apply_seed(patch.at("seed").get<std::uint64_t>());
    json merged = to_json(start);
    merged.merge_patch(patch);
    RunConfig out = from_json(merged);
    out.validate();
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return merge_run_config(RunConfig{}, j);
}

}  // namespace tubuda
