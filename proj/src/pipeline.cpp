#include "dispersion/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "dispersion/error.hpp"

namespace dispersion {

namespace {

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

template <class T>
void read_optional(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

template <class T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw Error(ErrorKind::InvalidConfig, "unknown key '" + k + "' in " + where);
  }
}

}  // namespace

void Logger::log(Level level, const std::string& event, nlohmann::json fields) const {
  if (static_cast<int>(level) > static_cast<int>(level_)) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  static std::mutex m;
  fields["level"] = names[static_cast<int>(level)];
  fields["event"] = event;
  std::lock_guard lock(m);
  std::cerr << fields.dump() << '\n';
}

Logger::Level Logger::parse_level(const std::string& text) {
  if (text == "error") return Level::Error;
  if (text == "warn") return Level::Warn;
  if (text == "info") return Level::Info;
  if (text == "debug") return Level::Debug;
  throw Error(ErrorKind::InvalidConfig, "unknown log level '" + text + "'");
}

LabelingConfig PreprocessConfig::labeling() const {
  LabelingConfig l;
  l.threshold_mm = threshold_mm;
  l.axis = axis;
  if (peak_step) {
    l.peak_rule = PeakRule::ExplicitTimestep;
    l.explicit_timestep = *peak_step;
  }
  return l;
}

LabeledDataset preprocess_dataset(const TrajectorySet& ts, const PreprocessConfig& cfg, const Logger* log) {
  TrajectorySet current = cfg.exclude_parts.empty() ? ts : filter_parts(ts, cfg.exclude_parts);
  if (cfg.remove_rigid) current = remove_rigid_body_motion(current);
  if (cfg.truncate) current = truncate_timesteps(current, *cfg.truncate);
  auto labels = label_dispersion(current, cfg.labeling());
  std::size_t dispersed = 0;
  for (const auto& l : labels) dispersed += static_cast<std::size_t>(l.y);
  if (log)
    log->info("labeled", {{"nodes", labels.size()},
                          {"dispersed", dispersed},
                          {"peak_timestep", labels.empty() ? 0 : labels.front().peak_timestep}});
  if (!cfg.balance_seed) return {std::move(current), std::move(labels)};

  const auto keep = balance_classes(labels, *cfg.balance_seed);
  std::vector<DispersionLabel> kept;
  kept.reserve(keep.size());
  std::size_t k = 0;
  for (const auto& l : labels)
    if (k < keep.size() && l.node_id == keep[k]) {
      kept.push_back(l);
      ++k;
    }
  if (log) log->info("balanced", {{"nodes", kept.size()}});
  return {select_nodes(current, keep), std::move(kept)};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c) {
  reject_unknown(j,
                 {"n_nodes", "n_runs", "timesteps", "dt_ms", "dispersed_fraction", "perturbation_mm", "divergence_rate",
                  "branch_onset", "onset_jitter", "branch_min_mm", "branch_max_mm", "noise_floor_mm", "noise_modes",
                  "peak_timestep", "threshold_mm", "n_parts", "rigid_motion", "rigid_velocity_mm_per_ms",
                  "rigid_yaw_rad_per_ms", "rigid_pitch_rad_per_ms", "seed"},
                 "generate");
  read_if(j, "n_nodes", c.n_nodes);
  read_if(j, "n_runs", c.n_runs);
  read_if(j, "timesteps", c.timesteps);
  read_if(j, "dt_ms", c.dt_ms);
  read_if(j, "dispersed_fraction", c.dispersed_fraction);
  read_if(j, "perturbation_mm", c.perturbation_mm);
  read_if(j, "divergence_rate", c.divergence_rate);
  read_if(j, "branch_onset", c.branch_onset);
  read_if(j, "onset_jitter", c.onset_jitter);
  read_if(j, "branch_min_mm", c.branch_min_mm);
  read_if(j, "branch_max_mm", c.branch_max_mm);
  read_if(j, "noise_floor_mm", c.noise_floor_mm);
  read_if(j, "noise_modes", c.noise_modes);
  read_if(j, "peak_timestep", c.peak_timestep);
  read_if(j, "threshold_mm", c.threshold_mm);
  read_if(j, "n_parts", c.n_parts);
  read_if(j, "rigid_motion", c.rigid_motion);
  read_if(j, "rigid_velocity_mm_per_ms", c.rigid_velocity_mm_per_ms);
  read_if(j, "rigid_yaw_rad_per_ms", c.rigid_yaw_rad_per_ms);
  read_if(j, "rigid_pitch_rad_per_ms", c.rigid_pitch_rad_per_ms);
  read_if(j, "seed", c.seed);
  return c;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_nodes", c.n_nodes},
          {"n_runs", c.n_runs},
          {"timesteps", c.timesteps},
          {"dt_ms", c.dt_ms},
          {"dispersed_fraction", c.dispersed_fraction},
          {"perturbation_mm", c.perturbation_mm},
          {"divergence_rate", c.divergence_rate},
          {"branch_onset", c.branch_onset},
          {"onset_jitter", c.onset_jitter},
          {"branch_min_mm", c.branch_min_mm},
          {"branch_max_mm", c.branch_max_mm},
          {"noise_floor_mm", c.noise_floor_mm},
          {"noise_modes", c.noise_modes},
          {"peak_timestep", c.peak_timestep},
          {"threshold_mm", c.threshold_mm},
          {"n_parts", c.n_parts},
          {"rigid_motion", c.rigid_motion},
          {"rigid_velocity_mm_per_ms", c.rigid_velocity_mm_per_ms},
          {"rigid_yaw_rad_per_ms", c.rigid_yaw_rad_per_ms},
          {"rigid_pitch_rad_per_ms", c.rigid_pitch_rad_per_ms},
          {"seed", c.seed}};
}

RraeHyperparams rrae_from_json(const nlohmann::json& j, RraeHyperparams hp) {
  reject_unknown(j,
                 {"k_max", "lambda_recon", "lambda_cls", "n1", "n2", "latent_dim", "encoder_hidden", "decoder_hidden",
                  "classifier_hidden", "learning_rate", "batch_size", "seed"},
                 "rrae");
  read_if(j, "k_max", hp.k_max);
  read_if(j, "lambda_recon", hp.lambda_recon);
  read_if(j, "lambda_cls", hp.lambda_cls);
  read_if(j, "n1", hp.n1_epochs);
  read_if(j, "n2", hp.n2_epochs);
  read_if(j, "latent_dim", hp.latent_dim);
  read_if(j, "encoder_hidden", hp.encoder_hidden);
  read_if(j, "decoder_hidden", hp.decoder_hidden);
  read_if(j, "classifier_hidden", hp.classifier_hidden);
  read_if(j, "learning_rate", hp.learning_rate);
  read_if(j, "batch_size", hp.batch_size);
  read_if(j, "seed", hp.seed);
  hp.validate();
  return hp;
}

nlohmann::json to_json(const RraeHyperparams& hp) {
  return {{"k_max", hp.k_max},
          {"lambda_recon", hp.lambda_recon},
          {"lambda_cls", hp.lambda_cls},
          {"n1", hp.n1_epochs},
          {"n2", hp.n2_epochs},
          {"latent_dim", hp.latent_dim},
          {"encoder_hidden", hp.encoder_hidden},
          {"decoder_hidden", hp.decoder_hidden},
          {"classifier_hidden", hp.classifier_hidden},
          {"learning_rate", hp.learning_rate},
          {"batch_size", hp.batch_size},
          {"seed", hp.seed}};
}

ForestConfig forest_from_json(const nlohmann::json& j, ForestConfig c) {
  reject_unknown(j, {"trees", "max_depth", "min_samples_leaf", "mtry", "sample_fraction", "seed"}, "forest");
  read_if(j, "trees", c.n_trees);
  read_if(j, "max_depth", c.max_depth);
  read_if(j, "min_samples_leaf", c.min_samples_leaf);
  read_if(j, "mtry", c.features_per_split);
  read_if(j, "sample_fraction", c.sample_fraction);
  read_if(j, "seed", c.seed);
  if (c.n_trees < 1) throw Error(ErrorKind::InvalidConfig, "forest needs at least one tree");
  return c;
}

nlohmann::json to_json(const ForestConfig& c) {
  return {{"trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"min_samples_leaf", c.min_samples_leaf},
          {"mtry", c.features_per_split},
          {"sample_fraction", c.sample_fraction},
          {"seed", c.seed}};
}

PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  reject_unknown(doc,
                 {"seed", "output_dir", "log_level", "dataset", "generate", "preprocess", "evaluate", "rrae", "forest",
                  "acceptance"},
                 "pipeline config");
  PipelineConfig cfg;
  try {
    read_if(doc, "seed", cfg.seed);
    std::string out;
    read_if(doc, "output_dir", out);
    if (!out.empty()) cfg.output_dir = out;
    if (cfg.output_dir.is_relative() && !base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;
    read_if(doc, "log_level", cfg.log_level);
    Logger::parse_level(cfg.log_level);

    if (doc.contains("dataset")) {
      const auto& d = doc["dataset"];
      reject_unknown(d, {"manifest"}, "dataset");
      if (!d.contains("manifest") || !d["manifest"].is_string() || d["manifest"].get<std::string>().empty())
        throw Error(ErrorKind::InvalidConfig, "dataset.manifest must name a manifest file");
      std::filesystem::path p = d["manifest"].get<std::string>();
      cfg.manifest = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      if (!std::filesystem::exists(*cfg.manifest))
        throw Error(ErrorKind::InvalidConfig, "dataset manifest '" + cfg.manifest->string() + "' does not exist");
    }
    if (doc.contains("generate")) {
      SynthConfig base;
      base.seed = cfg.seed;
      cfg.generate = synth_config_from_json(doc["generate"], base);
      cfg.generate->validate();
    }
    if (cfg.manifest && cfg.generate)
      throw Error(ErrorKind::InvalidConfig, "config names both a dataset manifest and a generator");
    if (!cfg.manifest && !cfg.generate)
      throw Error(ErrorKind::InvalidConfig, "config needs either dataset.manifest or a generate section");

    auto& pre = cfg.preprocess;
    pre.balance_seed = cfg.seed;
    if (doc.contains("preprocess")) {
      const auto& p = doc["preprocess"];
      reject_unknown(p, {"threshold_mm", "axis", "peak_step", "truncate", "exclude_parts", "remove_rigid", "balance", "balance_seed"},
                     "preprocess");
      read_if(p, "threshold_mm", pre.threshold_mm);
      if (p.contains("axis")) pre.axis = parse_axis(p["axis"].get<std::string>());
      read_optional(p, "peak_step", pre.peak_step);
      read_optional(p, "truncate", pre.truncate);
      read_if(p, "exclude_parts", pre.exclude_parts);
      read_if(p, "remove_rigid", pre.remove_rigid);
      read_optional(p, "balance_seed", pre.balance_seed);
      if (p.contains("balance") && !p["balance"].get<bool>()) pre.balance_seed.reset();
    }
    if (!(pre.threshold_mm > 0.0)) throw Error(ErrorKind::InvalidConfig, "preprocess.threshold_mm must be positive");

    auto& cmp = cfg.comparison;
    cmp.rrae.seed = cfg.seed;
    cmp.forest.seed = cfg.seed;
    if (doc.contains("rrae")) cmp.rrae = rrae_from_json(doc["rrae"], cmp.rrae);
    if (doc.contains("forest")) cmp.forest = forest_from_json(doc["forest"], cmp.forest);

    std::vector<std::string> encodings = {"displacement", "slope@220", "wavelet"};
    std::vector<std::string> classifiers = {"rrae", "rf"};
    if (doc.contains("evaluate")) {
      const auto& e = doc["evaluate"];
      reject_unknown(e, {"encodings", "classifiers", "train_runs", "val_runs", "rrae_train_runs"}, "evaluate");
      read_if(e, "encodings", encodings);
      read_if(e, "classifiers", classifiers);
      read_if(e, "train_runs", cmp.split.train_runs);
      read_if(e, "val_runs", cmp.split.val_runs);
      read_if(e, "rrae_train_runs", cmp.split.rrae_train_runs);
    }
    cmp.encodings.clear();
    for (const auto& e : encodings) cmp.encodings.push_back(parse_encoding_spec(e));
    cmp.classifiers.clear();
    for (const auto& c : classifiers) cmp.classifiers.push_back(parse_classifier(c));
    if (cmp.encodings.empty() || cmp.classifiers.empty())
      throw Error(ErrorKind::InvalidConfig, "evaluate needs at least one encoding and one classifier");
    if (cfg.generate) cmp.split.validate(cfg.generate->n_runs);

    if (doc.contains("acceptance")) {
      const auto& a = doc["acceptance"];
      reject_unknown(a, {"min_balanced_accuracy"}, "acceptance");
      read_optional(a, "min_balanced_accuracy", cfg.min_balanced_accuracy);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed pipeline config: ") + e.what());
  }
  cfg.source = canonical_config(cfg);
  return cfg;
}

nlohmann::json canonical_config(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  if (cfg.manifest) j["dataset"] = {{"manifest", cfg.manifest->string()}};
  if (cfg.generate) j["generate"] = to_json(*cfg.generate);
  const auto& p = cfg.preprocess;
  j["preprocess"] = {{"threshold_mm", p.threshold_mm},
                     {"axis", to_string(p.axis)},
                     {"peak_step", optional_json(p.peak_step)},
                     {"truncate", optional_json(p.truncate)},
                     {"exclude_parts", p.exclude_parts},
                     {"remove_rigid", p.remove_rigid},
                     {"balance_seed", optional_json(p.balance_seed)}};
  nlohmann::json encodings = nlohmann::json::array(), classifiers = nlohmann::json::array();
  for (const auto& e : cfg.comparison.encodings) encodings.push_back(e.to_json());
  for (auto c : cfg.comparison.classifiers) classifiers.push_back(to_string(c));
  j["evaluate"] = {{"encodings", encodings}, {"classifiers", classifiers}, {"split", cfg.comparison.split.to_json()}};
  j["rrae"] = to_json(cfg.comparison.rrae);
  j["forest"] = to_json(cfg.comparison.forest);
  j["acceptance"] = {{"min_balanced_accuracy", optional_json(cfg.min_balanced_accuracy)}};
  return j;
}

nlohmann::json Provenance::to_json() const {
  return {{"tool", tool}, {"version", version}, {"config_hash", config_hash}, {"dataset_hash", dataset_hash}};
}

Provenance version_and_provenance(const PipelineConfig& cfg, const TrajectorySet* dataset) {
  Provenance p;
  p.tool = kToolName;
  p.version = kToolVersion;
  auto canonical = cfg.source.is_null() ? canonical_config(cfg) : cfg.source;
  // where outputs land does not change what is computed
  canonical.erase("output_dir");
  p.config_hash = hash_hex(canonical.dump());
  if (dataset) p.dataset_hash = hash_hex(std::to_string(content_hash(*dataset)));
  return p;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const Logger& log) {
  PipelineResult result;
  result.provenance = version_and_provenance(cfg);
  std::string stage = "setup";
  try {
    std::filesystem::create_directories(cfg.output_dir);

    stage = "dataset";
    TrajectorySet ts;
    if (cfg.generate) {
      log.info("stage", {{"stage", "generate"}, {"nodes", cfg.generate->n_nodes}, {"runs", cfg.generate->n_runs}});
      auto ds = generate(*cfg.generate);
      ts = std::move(ds.trajectories);
    } else {
      log.info("stage", {{"stage", "load"}, {"manifest", cfg.manifest->string()}});
      const auto manifest = read_manifest(*cfg.manifest);
      ts = load_trajectory_set(manifest, cfg.manifest->parent_path());
    }
    result.provenance = version_and_provenance(cfg, &ts);

    stage = "preprocess";
    log.info("stage", {{"stage", stage}});
    const auto labeled = preprocess_dataset(ts, cfg.preprocess, &log);
    const auto labels_path = cfg.output_dir / "labels.csv";
    write_labels_csv(labeled.trajectories, labeled.labels, labels_path);
    result.artifacts.push_back(labels_path);

    stage = "evaluate";
    log.info("stage", {{"stage", stage}, {"entries", cfg.comparison.encodings.size() * cfg.comparison.classifiers.size()}});
    result.report = compare_encodings(labeled, cfg.comparison);
    result.report_json = result.report.to_json();
    result.report_json["provenance"] = result.provenance.to_json();

    stage = "report";
    const auto json_path = cfg.output_dir / "report.json";
    const auto text_path = cfg.output_dir / "report.txt";
    const auto svg_path = cfg.output_dir / "report.svg";
    {
      std::ofstream out(json_path);
      if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + json_path.string() + "'");
      out << result.report_json.dump(2) << '\n';
    }
    {
      std::ofstream out(text_path);
      out << result.report.to_text();
    }
    {
      std::ofstream out(svg_path);
      out << result.report.to_svg();
    }
    result.artifacts.insert(result.artifacts.end(), {json_path, text_path, svg_path});

    if (cfg.min_balanced_accuracy) {
      for (const auto& e : result.report.entries) {
        const double ba = e.confusion.balanced_accuracy().value_or(0.0);
        if (ba < *cfg.min_balanced_accuracy) {
          result.acceptance_passed = false;
          log.warn("acceptance_threshold", {{"encoding", e.encoding.name()},
                                            {"classifier", to_string(e.classifier)},
                                            {"balanced_accuracy", ba},
                                            {"required", *cfg.min_balanced_accuracy}});
        }
      }
    }
    log.info("done", {{"report", json_path.string()}, {"config_hash", result.provenance.config_hash}});
  } catch (const Error& e) {
    log.log(Logger::Level::Error, "stage_failed",
            {{"stage", stage}, {"kind", to_string(e.kind())}, {"message", e.what()}, {"config_hash", result.provenance.config_hash}});
    throw;
  }
  return result;
}

void write_labels_csv(const TrajectorySet& ts, const std::vector<DispersionLabel>& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
  out << "node_id,part_id,y,spread_mm,peak_timestep\n";
  char buf[64];
  for (const auto& l : labels) {
    const auto i = ts.find_node(l.node_id);
    const std::int64_t part = i >= 0 ? ts.part_ids()[static_cast<std::size_t>(i)] : -1;
    std::snprintf(buf, sizeof(buf), "%.9g", l.spread_mm);
    out << l.node_id << ',' << part << ',' << l.y << ',' << buf << ',' << l.peak_timestep << '\n';
  }
}

std::vector<std::pair<std::int64_t, int>> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::int64_t, int>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string node, part, y;
    if (!std::getline(ss, node, ',') || !std::getline(ss, part, ',') || !std::getline(ss, y, ','))
      throw Error(ErrorKind::IoFailure, "malformed label row at line " + std::to_string(line_no));
    try {
      out.emplace_back(std::stoll(node), std::stoi(y));
    } catch (const std::exception&) {
      throw Error(ErrorKind::IoFailure, "malformed label row at line " + std::to_string(line_no));
    }
  }
  return out;
}

}  // namespace dispersion
