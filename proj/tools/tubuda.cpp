// Command-line entry point: synth, features, sr-train, sr-apply, uda-train,
// evaluate. Each run directory receives config.json (the exact RunConfig)
// and run_meta.json (command, inputs, wall-clock data).

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tubuda/error.hpp"
#include "tubuda/parallel.hpp"
#include "tubuda/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tubuda;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON run config; keys override the desk defaults");
  cmd->add_option("--seed", c.seed, "Run seed (dataset, initialisation, batch order)");
  cmd->add_option("--preset", c.preset, "Width preset")->check(CLI::IsMember({"desk", "full"}));
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (!c.preset.empty()) cfg.apply_preset(parse_preset(c.preset));
  if (c.seed) cfg.apply_seed(*c.seed);
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed for '" + p.string() + "'");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Run directories are append-only: a directory that already holds a run is
// never reused.
class Run {
 public:
  Run(const fs::path& dir, std::string command, const RunConfig& cfg, json inputs)
      : dir_(dir), command_(std::move(command)), inputs_(std::move(inputs)), started_(utc_now()),
        t0_(std::chrono::steady_clock::now()) {
    if (fs::exists(dir_ / "config.json")) {
      throw IoError("run directory '" + dir_.string() + "' already holds a run");
    }
    fs::create_directories(dir_);
    write_json(dir_ / "config.json", to_json(cfg));
  }

  const fs::path& dir() const { return dir_; }

  void finish(json summary = json::object()) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    write_json(dir_ / "run_meta.json", {{"command", command_},
                                        {"inputs", inputs_},
                                        {"summary", summary},
                                        {"started_utc", started_},
                                        {"wall_seconds", secs},
                                        {"threads", worker_count()}});
  }

 private:
  fs::path dir_;
  std::string command_;
  json inputs_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
};

fs::path manifest_of(const std::string& data) {
  const fs::path p(data);
  if (fs::is_directory(p)) return p / "manifest.json";
  if (!fs::exists(p)) throw IoError("data path '" + data + "' does not exist");
  return p;
}

std::optional<SrModel> load_sr(const std::string& dir, const RunConfig& cfg) {
  if (dir.empty()) return std::nullopt;
  std::optional<SrModel> sr(std::in_place, cfg.sr_hybrid, cfg.sr, cfg.seed);
  sr->load(dir);
  return sr;
}

// The segmentation stage needs the SR checkpoint exactly when HRG is on.
const SrModel* seg_sr(const std::optional<SrModel>& sr, const RunConfig& cfg) {
  if (cfg.seg.use_hrg && !sr) throw ConfigError("seg.use_hrg is on but no --sr checkpoint directory was given");
  return cfg.seg.use_hrg ? &*sr : nullptr;
}

std::string jsonl(const json& j) { return j.dump() + "\n"; }

// --- commands -------------------------------------------------------------

void cmd_synth(const Common& c) {
  const RunConfig cfg = resolve(c);
  Run run(c.out, "synth", cfg, json::object());
  write_benchmark(cfg.synth, run.dir());
  run.finish({{"images", cfg.synth.source_train + cfg.synth.target_train + cfg.synth.source_test +
                             cfg.synth.target_test}});
  std::cout << "synth: wrote benchmark to " << run.dir().string() << "\n";
}

void cmd_features(const Common& c, const std::string& input, const std::string& weights, const std::string& stage) {
  const RunConfig cfg = resolve(c);
  Run run(c.out, "features", cfg, {{"input", input}, {"weights", weights}, {"stage", stage}});
  const Image img = load_image(input);
  const FeatureStack stack = extract_stack(img, cfg.vesselness);
  for (int i = 0; i < stack.n(); ++i) save_image(stack.features[i], run.dir() / (std::string(kFeatureNames[i]) + ".png"));

  const HybridConfig& hcfg = stage == "sr" ? cfg.sr_hybrid : cfg.seg.hybrid;
  Rng rng(cfg.seed);
  FeatureWeightModule module(hcfg, rng);
  if (!weights.empty()) module.params().load(weights);
  NoGradGuard guard;
  const HybridOutput o = module.forward(to_batch(std::span<const FeatureStack>(&stack, 1)), Mode::eval);
  Image hfi(img.width(), img.height(), ValueRange::byte);
  for (std::size_t i = 0; i < hfi.size(); ++i) hfi.data()[i] = std::round(o.hfi.data()[i] * 255.0);
  hfi.clamp();
  save_image(hfi, run.dir() / "hfi.png");

  json alpha = json::object();
  for (int i = 0; i < stack.n(); ++i) alpha[kFeatureNames[i]] = o.alpha.data()[i];
  write_json(run.dir() / "alpha.json", {{"beta", hcfg.beta}, {"alpha", alpha}});
  run.finish();
  std::cout << "features: " << alpha.dump() << "\n";
}

void cmd_sr_train(const Common& c, const std::string& data) {
  const RunConfig cfg = resolve(c);
  const fs::path manifest = manifest_of(data);
  Run run(c.out, "sr-train", cfg, {{"data", manifest.string()}});
  const DatasetSplit source = load_split(manifest, Domain::source, Role::train);
  SrModel model(cfg.sr_hybrid, cfg.sr, cfg.seed);
  std::ofstream losses(run.dir() / "sr_losses.jsonl");
  const auto l = sr_train(model, source, cfg.vesselness, cfg.sr_train, [&](int step, double v) {
    losses << jsonl({{"step", step}, {"l1", v}});
  });
  model.save(run.dir());
  run.finish({{"first_l1", l.front()}, {"last_l1", l.back()}});
  std::cout << "sr-train: l1 " << l.front() << " -> " << l.back() << "\n";
}

void cmd_sr_apply(const Common& c, const std::string& data, const std::string& sr_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path manifest = manifest_of(data);
  Run run(c.out, "sr-apply", cfg, {{"data", manifest.string()}, {"sr", sr_dir}});
  const std::optional<SrModel> sr = load_sr(sr_dir, cfg);
  const auto entries = read_manifest(manifest);
  std::vector<std::string> written(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const fs::path src = entries[i].path;
    const fs::path dst = run.dir() / (src.stem().string() + ".hrg.png");
    save_image(sr_apply(*sr, load_image(src), cfg.vesselness), dst);
    written[i] = dst.filename().string();
  });
  run.finish({{"images", written.size()}});
  std::cout << "sr-apply: wrote " << written.size() << " images\n";
}

void cmd_uda_train(const Common& c, const std::string& data, const std::string& sr_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path manifest = manifest_of(data);
  Run run(c.out, "uda-train", cfg, {{"data", manifest.string()}, {"sr", sr_dir}});
  const std::optional<SrModel> sr = load_sr(sr_dir, cfg);
  const SrModel* srp = seg_sr(sr, cfg);
  const auto source = prepare_source(load_split(manifest, Domain::source, Role::train), srp, cfg.vesselness);
  std::vector<TargetSample> target;
  if (!cfg.seg.weights.all_zero()) {
    target = prepare_target(load_split(manifest, Domain::target, Role::train), srp, cfg.vesselness);
  }
  SegModel model(cfg.seg, cfg.seed);
  std::ofstream losses(run.dir() / "uda_losses.jsonl");
  const auto reports = uda_train(model, source, target, [&](const LossReport& r) { losses << jsonl(r.to_json()); });
  model.save(run.dir());
  run.finish({{"last_total", reports.empty() ? 0.0 : reports.back().total}});
  std::cout << "uda-train: " << reports.size() << " steps\n";
}

void cmd_evaluate(const Common& c, const std::string& data, const std::string& split_name, const std::string& pred_dir,
                  const std::string& model_dir, const std::string& sr_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path manifest = manifest_of(data);
  const auto slash = split_name.find('/');
  if (slash == std::string::npos) throw ConfigError("--split expects domain/role, got '" + split_name + "'");
  const Domain domain = parse_domain(split_name.substr(0, slash));
  const Role role = parse_role(split_name.substr(slash + 1));
  if (pred_dir.empty() == model_dir.empty()) throw ConfigError("evaluate needs exactly one of --pred or --model");
  Run run(c.out, "evaluate", cfg,
          {{"data", manifest.string()}, {"split", split_name}, {"pred", pred_dir}, {"model", model_dir}, {"sr", sr_dir}});
  const DatasetSplit split = load_split(manifest, domain, role);
  if (!split.labels_readable()) throw ConfigError("split " + split_name + " has sealed labels");

  EvalReport report;
  if (!model_dir.empty()) {
    const std::optional<SrModel> sr = load_sr(sr_dir, cfg);
    SegModel model(cfg.seg, cfg.seed);
    model.load(model_dir);
    std::vector<Image> preds;
    report = evaluate_split(model, split, seg_sr(sr, cfg), cfg.vesselness, &preds);
    fs::create_directories(run.dir() / "predictions");
    for (std::size_t i = 0; i < preds.size(); ++i) {
      save_image(preds[i], run.dir() / "predictions" / (split.id(i) + ".png"));
    }
  } else {
    // Prediction files carry the label file names.
    std::vector<EvalResult> results;
    for (const auto& e : read_manifest(manifest)) {
      if (e.domain != domain || e.role != role || !e.label_path) continue;
      const fs::path label = *e.label_path;
      const fs::path pred = fs::path(pred_dir) / label.filename();
      results.push_back(evaluate_pair(label.stem().string(), load_image(pred), load_image(label)));
    }
    report = summarize(std::move(results));
  }
  json out = report.to_json();
  out["split"] = split_name;
  write_json(run.dir() / "metrics.json", out);
  run.finish({{"mean_dice", report.mean_dice}});
  std::cout << "evaluate: " << split_name << " mean dice " << report.mean_dice << " mean hd95 "
            << report.mean_hd95 << " (" << report.finite_hd95 << "/" << report.per_image.size() << " finite)\n";
}

int fail(const char* kind, const std::string& message, int code, const std::string& component = {}) {
  json j{{"error", kind}, {"message", message}};
  if (!component.empty()) j["component"] = component;
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tubuda: structural-feature UDA pipeline for membrane segmentation"};
  app.require_subcommand(1);

  Common common;
  std::string input, weights, stage = "seg", data, sr_dir, split = "target/test", pred_dir, model_dir;

  auto* synth = app.add_subcommand("synth", "Write the two-domain synthetic benchmark");
  add_common(synth, common);

  auto* features = app.add_subcommand("features", "Dump the structural features and weights of one image");
  add_common(features, common);
  features->add_option("--input", input, "Grayscale PNG or TIFF")->required()->check(CLI::ExistingFile);
  features->add_option("--weights", weights, "Feature-weight checkpoint (sr_hybrid.ckpt or seg_hybrid.ckpt)");
  features->add_option("--stage", stage, "Which feature-weight config to use")->check(CLI::IsMember({"sr", "seg"}));

  auto* sr_train_cmd = app.add_subcommand("sr-train", "Train the super-resolution stage on source/train");
  add_common(sr_train_cmd, common);
  sr_train_cmd->add_option("--data", data, "Benchmark directory or manifest")->required();

  auto* sr_apply_cmd = app.add_subcommand("sr-apply", "Write the HRG of every manifest image");
  add_common(sr_apply_cmd, common);
  sr_apply_cmd->add_option("--data", data, "Benchmark directory or manifest")->required();
  sr_apply_cmd->add_option("--sr", sr_dir, "sr-train run directory")->required();

  auto* uda = app.add_subcommand("uda-train", "Train the segmentation stage with domain adaptation");
  add_common(uda, common);
  uda->add_option("--data", data, "Benchmark directory or manifest")->required();
  uda->add_option("--sr", sr_dir, "sr-train run directory (needed when seg.use_hrg is on)");

  auto* eval = app.add_subcommand("evaluate", "Score predictions against labels");
  add_common(eval, common);
  eval->add_option("--data", data, "Benchmark directory or manifest")->required();
  eval->add_option("--split", split, "domain/role to score");
  eval->add_option("--pred", pred_dir, "Directory of prediction PNGs named like the labels");
  eval->add_option("--model", model_dir, "uda-train run directory to segment with");
  eval->add_option("--sr", sr_dir, "sr-train run directory (with --model and seg.use_hrg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 3);
  }

  try {
    if (*synth) cmd_synth(common);
    if (*features) cmd_features(common, input, weights, stage);
    if (*sr_train_cmd) cmd_sr_train(common, data);
    if (*sr_apply_cmd) cmd_sr_apply(common, data, sr_dir);
    if (*uda) cmd_uda_train(common, data, sr_dir);
    if (*eval) cmd_evaluate(common, data, split, pred_dir, model_dir, sr_dir);
  } catch (const IoError& e) {
    return fail("io", e.what(), 2);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 3);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 4, e.component());
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
