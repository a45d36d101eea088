/*
 * Copyright 2026 The tfsep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// `tfsep` command line: preprocess, summary, train, eval, erf, gradcheck.
//
// Configuration is one JSON document with sections net, train, toy,
// frontend, data and erf. It is resolved as: defaults, then --seed (or
// TFSEP_SEED) applied to every seed key, then --config, then --set
// overrides, then dedicated flags such as --tau. Unknown keys are rejected.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tfsep/tfsep.hpp"

#ifndef TFSEP_VERSION
#define TFSEP_VERSION "0.1.0"
#endif

namespace tfsep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ErfSettings {
  std::size_t samples = 32;
  std::vector<double> thresholds{0.2, 0.3, 0.5};
  std::string mode = "raw";
  std::uint64_t noise_seed = 0;
};

struct DataSettings {
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct Config {
  NetConfig net;
  TrainConfig train;
  ToyDatasetSpec toy;
  LogMelConfig frontend;
  DataSettings data;
  ErfSettings erf;
};

inline json to_document(const Config& c) {
  return json{{"net", c.net},
              {"train", c.train},
              {"toy", c.toy},
              {"frontend", c.frontend},
              {"data", {{"val_fraction", c.data.val_fraction}, {"split_seed", c.data.split_seed}}},
              {"erf",
               {{"samples", c.erf.samples},
                {"thresholds", c.erf.thresholds},
                {"mode", c.erf.mode},
                {"noise_seed", c.erf.noise_seed}}}};
}

/// Every dotted leaf key with its default value, in document order.
inline std::vector<std::pair<std::string, json>> config_keys(const json& doc = to_document(Config{})) {
  std::vector<std::pair<std::string, json>> out;
  for (const auto& [section, body] : doc.items())
    for (const auto& [key, value] : body.items()) out.emplace_back(section + "." + key, value);
  return out;
}

inline std::string keys_help() {
  std::ostringstream os;
  os << "Config keys (--config file sections, or --set key=value):\n";
  for (const auto& [key, value] : config_keys()) os << "  " << std::left << std::setw(28) << key << value.dump() << '\n';
  return os.str();
}

namespace detail {

inline bool same_kind(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

/// Checks a user document against the defaults: known keys, matching kinds.
inline void check_document(const json& doc, const json& defaults) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [section, body] : doc.items()) {
    if (!defaults.contains(section)) throw UsageError("unknown config key '" + section + "'");
    if (!body.is_object()) throw UsageError("config key '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      const std::string dotted = section + "." + key;
      if (!defaults[section].contains(key)) throw UsageError("unknown config key '" + dotted + "'");
      if (!same_kind(defaults[section][key], value)) {
        throw UsageError("config key '" + dotted + "' has the wrong type (got " + value.dump() + ")");
      }
    }
  }
}

inline void merge_into(json& base, const json& over) {
  for (const auto& [section, body] : over.items())
    for (const auto& [key, value] : body.items()) base[section][key] = value;
}

inline json parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw UsageError("unknown config key '" + key + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json doc;
  doc[key.substr(0, dot)][key.substr(dot + 1)] = value;
  return doc;
}

inline Config from_document(const json& doc) {
  Config c;
  c.net = doc.at("net").get<NetConfig>();
  c.train = doc.at("train").get<TrainConfig>();
  c.toy = doc.at("toy").get<ToyDatasetSpec>();
  c.frontend = doc.at("frontend").get<LogMelConfig>();
  const json& d = doc.at("data");
  c.data.val_fraction = d.at("val_fraction").get<double>();
  c.data.split_seed = d.at("split_seed").get<std::uint64_t>();
  const json& e = doc.at("erf");
  c.erf.samples = e.at("samples").get<std::size_t>();
  c.erf.thresholds = e.at("thresholds").get<std::vector<double>>();
  c.erf.mode = e.at("mode").get<std::string>();
  c.erf.noise_seed = e.at("noise_seed").get<std::uint64_t>();
  return c;
}

inline void validate(const Config& c) {
  try {
    c.net.validate();
    c.train.validate();
    c.toy.validate();
    c.frontend.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!(c.data.val_fraction >= 0 && c.data.val_fraction < 1)) {
    throw UsageError("data.val_fraction must be in [0, 1)");
  }
  if (c.erf.samples == 0) throw UsageError("erf.samples must be positive");
  for (double t : c.erf.thresholds)
    if (!(t > 0 && t <= 1)) throw UsageError("erf.thresholds entries must be in (0, 1]");
  if (c.erf.mode != "raw" && c.erf.mode != "log") throw UsageError("erf.mode must be raw or log");
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw UsageError("config file " + path.string() + " is not valid JSON");
  return doc;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline Shape parse_shape(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      dims.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--input expects NxCxFxT with positive integers, got '" + text + "'");
    }
  }
  if (dims.size() != 4) throw UsageError("--input expects NxCxFxT, got '" + text + "'");
  if (dims[1] != 1) throw UsageError("--input must have one channel, got '" + text + "'");
  return {dims[0], dims[1], dims[2], dims[3]};
}

}  // namespace detail

/// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int verbosity = 0;

  void attach(CLI::App* app, bool out_is_dir = true) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one config key, key=value (repeatable)");
    app->add_option("--seed", seed, "Seed for every stochastic component (default: $TFSEP_SEED, then 0)");
    if (out_is_dir) app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_flag("-v,--verbose", verbosity, "More progress output");
    app->footer(keys_help());
  }

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("TFSEP_SEED")) {
      try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        return v;
      } catch (const std::exception&) {
        throw UsageError(std::string("TFSEP_SEED is not an unsigned integer: '") + env + "'");
      }
    }
    return 0;
  }

  /// Defaults, seed, config file, --set. `base` replaces the defaults when
  /// non-null (used to start from a checkpoint's stored config).
  json resolve_document(const json* base = nullptr) const {
    const json defaults = to_document(Config{});
    json doc = defaults;
    if (base) {
      detail::check_document(*base, defaults);
      detail::merge_into(doc, *base);
    } else {
      const std::uint64_t s = resolved_seed();
      doc["net"]["init_seed"] = s;
      doc["train"]["seed"] = s;
      doc["toy"]["seed"] = s;
      doc["data"]["split_seed"] = s;
      doc["erf"]["noise_seed"] = s;
    }
    if (!config_path.empty()) {
      const json file = detail::read_json_file(config_path);
      detail::check_document(file, defaults);
      detail::merge_into(doc, file);
    }
    for (const auto& s : sets) {
      const json over = detail::parse_override(s);
      detail::check_document(over, defaults);
      detail::merge_into(doc, over);
    }
    return doc;
  }
};

inline Config finish(const json& doc) {
  Config c = detail::from_document(doc);
  detail::validate(c);
  return c;
}

inline void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                           const Config& cfg, const json& options, const json& outputs) {
  const json manifest{{"tool", "tfsep"},       {"version", TFSEP_VERSION}, {"command", command},
                      {"seed", seed},          {"config", to_document(cfg)},
                      {"options", options},    {"outputs", outputs}};
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Toy data split into (train, held-out), or a WAV folder split the same way.
inline std::pair<Dataset, Dataset> load_split(const std::string& data, const Config& cfg, std::ostream& err,
                                              json& info) {
  Dataset all;
  if (data == "toy") {
    all = generate_toy_dataset(cfg.toy);
    info["source"] = "toy";
  } else {
    FolderDataset folder = load_wav_folder(data, cfg.frontend);
    for (const auto& w : folder.warnings) err << "warning: " << w << '\n';
    all = std::move(folder.dataset);
    info["source"] = "folder";
    info["skipped"] = folder.skipped;
    if (all.size() == 0) throw std::runtime_error("no readable WAV files under " + data);
  }
  info["hash"] = all.hash();
  info["class_names"] = all.class_names;
  info["samples"] = all.size();
  return split_dataset(all, cfg.data.val_fraction, cfg.data.split_seed);
}

inline int cmd_summary(const Common& common, int tau, const std::string& input, const std::vector<std::string>& ablate,
                       const std::string& format, std::ostream& out) {
  json doc = common.resolve_document();
  if (tau > 0) doc["net"]["tau"] = tau;
  Config cfg = detail::from_document(doc);
  for (const auto& flag : ablate) {
    try {
      cfg.net.set_ablation(flag);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  detail::validate(cfg);
  const Shape shape = detail::parse_shape(input);
  TfSepNet<float> model(cfg.net);
  const auto rows = summarize(model, shape);
  if (format == "table") out << summary_table(rows);
  else if (format == "csv") out << summary_csv(rows);
  else out << summary_json(rows).dump(2) << '\n';
  write_manifest(common.out, "summary", common.resolved_seed(), cfg,
                 {{"input", input}, {"format", format}, {"ablate", cfg.net.ablations()}}, json::array());
  return 0;
}

inline int cmd_train(const Common& common, int tau, const std::string& data, const std::string& ckpt_path,
                     std::ostream& out, std::ostream& err) {
  json doc = common.resolve_document();
  if (tau > 0) doc["net"]["tau"] = tau;
  Config cfg = detail::from_document(doc);
  json info;
  auto [train_set, val_set] = load_split(data, cfg, err, info);
  cfg.net.num_classes = train_set.num_classes();
  detail::validate(cfg);

  TfSepNet<float> model(cfg.net);
  Adam<float> adam(model.parameters(), cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps);
  const History history = train(model, train_set, val_set, cfg.train, adam, [&](const EpochRecord& r) {
    out << "epoch " << (r.epoch + 1) << "/" << cfg.train.epochs << " lr " << r.lr << " loss " << r.train_loss
        << " train_acc " << r.train_acc << " val_acc " << r.val_acc << '\n';
  });

  const fs::path ckpt(ckpt_path);
  const fs::path dir = ckpt.has_parent_path() ? ckpt.parent_path() : fs::path(".");
  fs::create_directories(dir);
  save_checkpoint(ckpt, model, &adam, {{"config", to_document(cfg)}, {"data", info}, {"epochs_run", history.size()}});
  detail::write_text(dir / "history.csv", history_csv(history));
  write_manifest(dir, "train", common.resolved_seed(), cfg, {{"data", data}, {"ckpt", ckpt.filename().string()}, {"dataset", info}},
                 {ckpt.filename().string(), "history.csv"});
  return 0;
}

inline Config config_from_checkpoint(const Common& common, const LoadedCheckpoint<float>& ck) {
  const json stored = ck.meta.contains("config") ? ck.meta.at("config") : json::object();
  Config cfg = detail::from_document(common.resolve_document(&stored));
  cfg.net = ck.model->config();
  detail::validate(cfg);
  return cfg;
}

inline int cmd_eval(const Common& common, const std::string& ckpt_path, const std::string& data, std::ostream& out,
                    std::ostream& err) {
  auto ck = load_checkpoint<float>(ckpt_path);
  const Config cfg = config_from_checkpoint(common, ck);
  Dataset ds;
  json info;
  if (data == "toy") {
    ds = load_split(data, cfg, err, info).second;
    if (ds.size() == 0) throw UsageError("data.val_fraction leaves no held-out toy samples");
  } else {
    FolderDataset folder = load_wav_folder(data, cfg.frontend);
    for (const auto& w : folder.warnings) err << "warning: " << w << '\n';
    ds = std::move(folder.dataset);
    info = {{"source", "folder"}, {"skipped", folder.skipped}, {"hash", ds.hash()}};
    if (ds.size() == 0) throw std::runtime_error("no readable WAV files under " + data);
  }
  if (ds.num_classes() != cfg.net.num_classes) {
    throw UsageError("dataset has " + std::to_string(ds.num_classes()) + " classes, checkpoint expects " +
                     std::to_string(cfg.net.num_classes));
  }
  const auto pred = predict(*ck.model, ds);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i];
  const double acc = static_cast<double>(correct) / static_cast<double>(ds.size());
  out << "accuracy " << acc << " (" << correct << "/" << ds.size() << ")\n";
  const json result{{"accuracy", acc}, {"correct", correct}, {"samples", ds.size()}, {"dataset", info}};
  detail::write_text(fs::path(common.out) / "eval.json", result.dump(2) + "\n");
  write_manifest(common.out, "eval", common.resolved_seed(), cfg, {{"ckpt", ckpt_path}, {"data", data}},
                 {"eval.json"});
  return 0;
}

inline int cmd_erf(const Common& common, const std::string& ckpt_path, int tau, const std::string& data,
                   std::optional<std::size_t> samples, const std::vector<double>& thresholds,
                   const std::string& mode, std::ostream& out, std::ostream& err) {
  std::unique_ptr<TfSepNet<float>> model;
  Config cfg;
  if (!ckpt_path.empty()) {
    auto ck = load_checkpoint<float>(ckpt_path);
    cfg = config_from_checkpoint(common, ck);
    model = std::move(ck.model);
  } else {
    json doc = common.resolve_document();
    if (tau > 0) doc["net"]["tau"] = tau;
    cfg = finish(doc);
    model = std::make_unique<TfSepNet<float>>(cfg.net);
  }
  if (samples) cfg.erf.samples = *samples;
  if (!thresholds.empty()) cfg.erf.thresholds = thresholds;
  if (!mode.empty()) cfg.erf.mode = mode;
  detail::validate(cfg);
  model->set_training(false);

  std::vector<Tensor<float>> inputs;
  if (data == "noise") {
    Rng rng(cfg.erf.noise_seed);
    for (std::size_t i = 0; i < cfg.erf.samples; ++i) inputs.push_back(random_normal<float>(kDefaultInput, rng));
  } else {
    Dataset ds;
    if (data == "toy") {
      ds = generate_toy_dataset(cfg.toy);
    } else {
      FolderDataset folder = load_wav_folder(data, cfg.frontend);
      for (const auto& w : folder.warnings) err << "warning: " << w << '\n';
      ds = std::move(folder.dataset);
    }
    for (std::size_t i = 0; i < std::min(cfg.erf.samples, ds.size()); ++i) {
      const std::size_t which[] = {i};
      inputs.push_back(ds.tensor<float>(which));
    }
    if (inputs.empty()) throw std::runtime_error("no ERF inputs available from " + data);
  }

  const ErfMap map = compute_erf<float>([&](const Tensor<float>& x) { return model->features(x); }, inputs,
                                        model->fingerprint());
  const ErfReport report = erf_report(map, cfg.erf.thresholds, parse_mass_mode(cfg.erf.mode));
  const fs::path dir(common.out);
  fs::create_directories(dir);
  export_map(map, dir / "map.pgm", MapFormat::Pgm);
  export_map(map, dir / "map.csv", MapFormat::Csv);
  json rj = to_json(report);
  rj["samples"] = map.samples;
  rj["fingerprint"] = map.fingerprint;
  rj["shape"] = {map.freq, map.time};
  detail::write_text(dir / "report.json", rj.dump(2) + "\n");
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    out << "t=" << report.thresholds[i] << " r=" << report.ratios[i] << '\n';
  }
  write_manifest(dir, "erf", common.resolved_seed(), cfg, {{"ckpt", ckpt_path}, {"data", data}},
                 {"map.pgm", "map.csv", "report.json"});
  return 0;
}

template <typename T>
GradCheckResult network_gradcheck(const NetConfig& net, Shape input, double h, std::size_t coords,
                                  std::uint64_t seed) {
  TfSepNet<T> model(net);
  model.set_training(true);
  Rng rng(seed);
  Tensor<T> x = random_normal<T>(input, rng);
  const Tensor<T> probe = random_normal<T>({input.n, net.num_classes, 1, 1}, rng);
  const std::vector<T> w(probe.data().begin(), probe.data().end());
  std::vector<Tensor<T>> wrt{x};
  for (auto& p : model.parameters()) wrt.push_back(p.tensor);
  return finite_diff_check<T>([&] { return weighted_sum(model.forward(x), w); }, wrt, h, coords, seed);
}

inline int cmd_gradcheck(const Common& common, int tau, const std::string& precision, const std::string& input,
                         std::optional<double> h, std::size_t coords, std::optional<double> tol, std::ostream& out) {
  json doc = common.resolve_document();
  if (tau > 0) doc["net"]["tau"] = tau;
  const Config cfg = finish(doc);
  const Shape shape = detail::parse_shape(input);
  const bool dbl = precision == "double";
  const double step = h.value_or(dbl ? 1e-6 : 1e-2);
  const double limit = tol.value_or(dbl ? 1e-5 : 5e-2);
  const GradCheckResult r = dbl ? network_gradcheck<double>(cfg.net, shape, step, coords, cfg.train.seed)
                                : network_gradcheck<float>(cfg.net, shape, step, coords, cfg.train.seed);
  const bool pass = r.max_rel_error < limit;
  out << "max_rel_error " << r.max_rel_error << " over " << r.coordinates << " coordinates (worst " << r.worst
      << "), tolerance " << limit << ": " << (pass ? "PASS" : "FAIL") << '\n';
  const json result{{"max_rel_error", r.max_rel_error}, {"coordinates", r.coordinates}, {"worst", r.worst},
                    {"tolerance", limit},          {"h", step},                  {"pass", pass}};
  detail::write_text(fs::path(common.out) / "gradcheck.json", result.dump(2) + "\n");
  write_manifest(common.out, "gradcheck", common.resolved_seed(), cfg,
                 {{"precision", precision}, {"input", input}, {"coords", coords}}, {"gradcheck.json"});
  return pass ? 0 : 2;
}

inline int cmd_preprocess(const Common& common, const std::string& in_dir, const std::string& format, std::ostream& out,
                          std::ostream& err) {
  const Config cfg = finish(common.resolve_document());
  if (!fs::is_directory(in_dir)) throw UsageError("--in " + in_dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(in_dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no WAV files under " + in_dir);

  const fs::path dir(common.out);
  json outputs = json::array();
  std::size_t skipped = 0;
  for (const auto& file : files) {
    const fs::path rel = fs::relative(file, in_dir);
    fs::path target = dir / rel;
    target.replace_extension(format == "csv" ? ".csv" : ".bundle");
    try {
      const LogMelSpectrogram spec = log_mel(resample_linear(load_wav(file), cfg.frontend.sample_rate), cfg.frontend);
      fs::create_directories(target.parent_path());
      if (format == "csv") {
        ErfMap view;  // reuse the row-per-frequency CSV writer
        view.freq = cfg.frontend.n_mels;
        view.time = cfg.frontend.target_frames;
        const auto d = spec.tensor.data();
        view.values.assign(d.begin(), d.end());
        export_map(view, target, MapFormat::Csv);
      } else {
        Bundle b;
        b.meta = {{"kind", "logmel"},
                  {"frontend", cfg.frontend},
                  {"frontend_fingerprint", spec.fingerprint},
                  {"frames_before_crop", spec.frames_before_crop},
                  {"source", rel.generic_string()}};
        b.add("logmel", spec.tensor);
        save_bundle(target, b);
      }
      outputs.push_back(fs::relative(target, dir).generic_string());
    } catch (const std::exception& e) {
      ++skipped;
      err << "warning: skipped " << file.string() << ": " << e.what() << '\n';
    }
  }
  out << "wrote " << outputs.size() << " spectrograms, skipped " << skipped << '\n';
  write_manifest(dir, "preprocess", common.resolved_seed(), cfg,
                 {{"in", in_dir}, {"format", format}, {"skipped", skipped}}, outputs);
  return outputs.empty() ? 2 : 0;
}

/// Entry point; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"TF-SepNet toolkit: spectrogram frontend, model summary, training, evaluation, ERF analysis"};
  app.set_version_flag("--version", TFSEP_VERSION);
  app.require_subcommand(1);

  Common common;
  int tau = 0;
  std::string input = "1x1x256x64", gc_input = "2x1x64x32", format = "table", data, ckpt, in_dir, precision = "double", mode;
  std::vector<std::string> ablate;
  std::optional<std::size_t> samples;
  std::vector<double> thresholds;
  std::optional<double> h, tol;
  std::size_t coords = 8;

  auto* pre = app.add_subcommand("preprocess", "WAV files to log-mel spectrograms");
  common.attach(pre);
  pre->add_option("--in", in_dir, "Directory searched recursively for .wav files")->required();
  pre->add_option("--format", format, "bundle or csv")->check(CLI::IsMember({"bundle", "csv"}));

  auto* sum = app.add_subcommand("summary", "Per-layer output shapes, parameters and MACs");
  common.attach(sum);
  sum->add_option("--tau", tau, "Base channel width");
  sum->add_option("--input", input, "Input shape NxCxFxT")->capture_default_str();
  sum->add_option("--ablate", ablate, "Comma-separated: no_shuffle,no_freq_path,no_temp_path,no_adaresnorm")
      ->delimiter(',');
  sum->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

  auto* tr = app.add_subcommand("train", "Train on the toy dataset or a WAV folder");
  common.attach(tr, false);
  tr->add_option("--tau", tau, "Base channel width");
  tr->add_option("--data", data, "toy, or a directory of <class>/*.wav")->required();
  tr->add_option("--out", ckpt, "Checkpoint path; history.csv and manifest.json go next to it")->required();

  auto* ev = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  common.attach(ev);
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data, "toy (held-out split), or a directory of <class>/*.wav")->required();

  auto* er = app.add_subcommand("erf", "Effective receptive field map and area ratios");
  common.attach(er);
  er->add_option("--ckpt", ckpt, "Checkpoint file (random init from --tau when omitted)")->check(CLI::ExistingFile);
  er->add_option("--tau", tau, "Base channel width when no checkpoint is given");
  er->add_option("--data", data, "toy, noise, or a directory of <class>/*.wav")->required();
  er->add_option("--samples", samples, "Number of inputs aggregated");
  er->add_option("--thresholds", thresholds, "Comma-separated mass fractions")->delimiter(',');
  er->add_option("--mode", mode, "raw or log mass")->check(CLI::IsMember({"raw", "log"}));

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full network");
  common.attach(gc);
  gc->add_option("--tau", tau, "Base channel width");
  gc->add_option("--precision", precision, "double or float")->check(CLI::IsMember({"double", "float"}));
  gc->add_option("--input", gc_input, "Input shape NxCxFxT")->capture_default_str();
  gc->add_option("--step", h, "Finite-difference step (default 1e-6 double, 1e-2 float)");
  gc->add_option("--coords", coords, "Sampled coordinates per tensor")->capture_default_str();
  gc->add_option("--tol", tol, "Pass threshold (default 1e-5 double, 5e-2 float)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(common, in_dir, format, out, err);
    if (sum->parsed()) return cmd_summary(common, tau, input, ablate, format, out);
    if (tr->parsed()) return cmd_train(common, tau, data, ckpt, out, err);
    if (ev->parsed()) return cmd_eval(common, ckpt, data, out, err);
    if (er->parsed()) return cmd_erf(common, ckpt, tau, data, samples, thresholds, mode, out, err);
    if (gc->parsed()) return cmd_gradcheck(common, tau, precision, gc_input, h, coords, tol, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace tfsep::cli
