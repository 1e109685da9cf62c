#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dispersion/error.hpp"
#include "dispersion/pipeline.hpp"

using namespace dispersion;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InfeasibleConfig:
    case ErrorKind::UnknownPartId:
    case ErrorKind::OutOfRange:
    case ErrorKind::LengthMismatch:
    case ErrorKind::NonBinaryLabel:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::TooShortForLevels:
      return true;
    default:
      return false;
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

TrajectorySet load_input(const std::string& input) {
  const fs::path p = input;
  if (p.extension() == ".json") return load_trajectory_set(read_manifest(p), p.parent_path());
  if (p.extension() == ".csv") return load_csv(p);
  return load_container(p);
}

/// Trajectories restricted to the labeled nodes, labels in node order.
LabeledDataset labeled_input(const std::string& input, const std::string& labels_path) {
  const auto ts = load_input(input);
  const auto pairs = read_labels_csv(labels_path);
  std::vector<std::int64_t> ids;
  LabeledDataset out;
  for (const auto& [node, y] : pairs) {
    if (ts.find_node(node) < 0) throw Error(ErrorKind::MismatchedNodeSet, "labeled node " + std::to_string(node) + " is not in the dataset");
    ids.push_back(node);
    DispersionLabel l;
    l.node_id = node;
    l.y = y;
    out.labels.push_back(l);
  }
  out.trajectories = select_nodes(ts, ids);
  return out;
}

std::vector<std::uint32_t> parse_runs(const std::string& text) {
  // "0,1,2" or "0-4"
  std::vector<std::uint32_t> runs;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) {
      if (const auto dash = item.find('-'); dash != std::string::npos && dash > 0) {
        const auto lo = std::stoul(item.substr(0, dash)), hi = std::stoul(item.substr(dash + 1));
        for (auto r = lo; r <= hi; ++r) runs.push_back(static_cast<std::uint32_t>(r));
      } else if (!item.empty()) {
        runs.push_back(static_cast<std::uint32_t>(std::stoul(item)));
      }
    }
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "bad run list '" + text + "'");
  }
  if (runs.empty()) throw Error(ErrorKind::InvalidConfig, "empty run list");
  return runs;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Training rows of the given runs with their labels.
std::pair<FeatureMatrix, std::vector<int>> training_rows(const FeatureMatrix& fm, const std::string& labels_path,
                                                         const std::vector<std::uint32_t>& runs) {
  std::map<std::int64_t, int> label_of;
  for (const auto& [node, y] : read_labels_csv(labels_path)) label_of[node] = y;
  std::vector<std::size_t> rows;
  std::vector<int> y;
  for (auto r : fm.rows_for_runs(runs)) {
    const auto it = label_of.find(fm.samples[r].node_id);
    if (it == label_of.end()) continue;
    rows.push_back(r);
    y.push_back(it->second);
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no labeled rows in the requested runs");
  return {fm.select(rows), std::move(y)};
}

bool has_magic(const fs::path& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  char buf[4] = {};
  in.read(buf, 4);
  return in && std::equal(buf, buf + 4, magic);
}

void write_predictions(const FeatureMatrix& fm, const std::vector<double>& prob, const std::vector<int>& label,
                       const std::string& out) {
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty() && out != "-") {
    file.open(out);
    if (!file) throw Error(ErrorKind::IoFailure, "cannot write '" + out + "'");
    os = &file;
  }
  *os << "node_id,run_id,probability,label\n";
  char buf[32];
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", prob[i]);
    *os << fm.samples[i].node_id << ',' << fm.samples[i].run << ',' << buf << ',' << label[i] << '\n';
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect dispersed nodes in multi-run crash trajectories"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "error|warn|info|debug")->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic multi-run dataset");
  std::string gen_config, gen_out = "dataset.dspc", gen_truth;
  // flags are collected as JSON overrides on top of --config
  nlohmann::json gen_flags = nlohmann::json::object();
  gen->add_option("--config", gen_config, "JSON generator settings");
  auto size_flag = [&](const char* flag, const char* key) {
    gen->add_option_function<std::size_t>(flag, [&gen_flags, key](const std::size_t& v) { gen_flags[key] = v; });
  };
  auto real_flag = [&](const char* flag, const char* key) {
    gen->add_option_function<double>(flag, [&gen_flags, key](const double& v) { gen_flags[key] = v; });
  };
  size_flag("--nodes", "n_nodes");
  size_flag("--runs", "n_runs");
  size_flag("--timesteps", "timesteps");
  real_flag("--dt-ms", "dt_ms");
  real_flag("--dispersed-fraction", "dispersed_fraction");
  real_flag("--perturbation-mm", "perturbation_mm");
  real_flag("--divergence-rate", "divergence_rate");
  size_flag("--branch-onset", "branch_onset");
  size_flag("--onset-jitter", "onset_jitter");
  real_flag("--branch-min-mm", "branch_min_mm");
  real_flag("--branch-max-mm", "branch_max_mm");
  real_flag("--noise-floor-mm", "noise_floor_mm");
  size_flag("--noise-modes", "noise_modes");
  size_flag("--peak-step", "peak_timestep");
  real_flag("--threshold-mm", "threshold_mm");
  size_flag("--parts", "n_parts");
  gen->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { gen_flags["seed"] = v; });
  gen->add_flag_callback("--rigid-motion", [&] { gen_flags["rigid_motion"] = true; }, "Superimpose whole-body motion");
  gen->add_option("--out", gen_out, "Trajectory container; manifest and ground truth are written next to it");
  gen->add_option("--ground-truth", gen_truth, "CSV of planted dispersed nodes");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Remove rigid motion, label and balance");
  std::string pre_input, pre_out = "processed.dspc", pre_labels = "labels.csv", pre_axis = "x", pre_exclude;
  double pre_threshold = 5.0;
  std::optional<std::size_t> pre_peak, pre_truncate;
  std::optional<std::uint64_t> pre_balance;
  bool pre_keep_rigid = false;
  pre->add_option("--input", pre_input, "Manifest (.json), container or CSV")->required();
  pre->add_option("--threshold-mm", pre_threshold);
  pre->add_option("--axis", pre_axis);
  pre->add_option("--peak-step", pre_peak);
  pre->add_option("--truncate", pre_truncate);
  pre->add_option("--exclude-parts", pre_exclude, "Comma-separated part ids");
  pre->add_option("--balance-seed", pre_balance, "Undersample the majority class with this seed");
  pre->add_flag("--keep-rigid-motion", pre_keep_rigid);
  pre->add_option("--out", pre_out);
  pre->add_option("--labels", pre_labels);

  // encode
  auto* enc = app.add_subcommand("encode", "Encode trajectories as feature rows");
  std::string enc_input, enc_kind = "displacement", enc_axis = "x", enc_mode = "symmetric", enc_out = "features.dspx";
  std::size_t enc_levels = 0;
  std::optional<std::size_t> enc_truncate;
  enc->add_option("--input", enc_input)->required();
  enc->add_option("--kind", enc_kind, "displacement|fourier|wavelet|slope");
  enc->add_option("--axis", enc_axis);
  enc->add_option("--wavelet-levels", enc_levels, "0 picks the deepest sensible level");
  enc->add_option("--wavelet-mode", enc_mode, "symmetric|zero|periodic");
  enc->add_option("--truncate", enc_truncate);
  enc->add_option("--out", enc_out);

  // crossings
  auto* cross = app.add_subcommand("crossings", "Cumulative pairwise crossing counts of one node");
  std::string cross_input, cross_axis = "x", cross_out;
  std::int64_t cross_node = 0;
  cross->add_option("--input", cross_input)->required();
  cross->add_option("--node", cross_node)->required();
  cross->add_option("--axis", cross_axis);
  cross->add_option("--out", cross_out);

  // train
  auto* train = app.add_subcommand("train", "Train the rank-reduction autoencoder classifier");
  std::string tr_features, tr_input, tr_encoding, tr_labels, tr_runs = "0", tr_out = "model.dspm";
  RraeHyperparams hp;
  train->add_option("--features", tr_features, "Feature file from `encode`");
  train->add_option("--input", tr_input, "Trajectories to encode with --encoding");
  train->add_option("--encoding", tr_encoding, "e.g. slope@220, wavelet, displacement");
  train->add_option("--labels", tr_labels)->required();
  train->add_option("--train-runs", tr_runs);
  train->add_option("--kmax", hp.k_max);
  train->add_option("--lambda-recon", hp.lambda_recon);
  train->add_option("--lambda-cls", hp.lambda_cls);
  train->add_option("--n1", hp.n1_epochs);
  train->add_option("--n2", hp.n2_epochs);
  train->add_option("--latent-dim", hp.latent_dim);
  train->add_option("--batch-size", hp.batch_size);
  train->add_option("--learning-rate", hp.learning_rate);
  train->add_option("--seed", hp.seed);
  train->add_option("--out", tr_out);

  // train-rf
  auto* trf = app.add_subcommand("train-rf", "Train the random forest baseline");
  std::string rf_features, rf_input, rf_encoding, rf_labels, rf_runs = "0-4", rf_out = "forest.dspf";
  ForestConfig fc;
  trf->add_option("--features", rf_features);
  trf->add_option("--input", rf_input);
  trf->add_option("--encoding", rf_encoding);
  trf->add_option("--labels", rf_labels)->required();
  trf->add_option("--train-runs", rf_runs);
  trf->add_option("--trees", fc.n_trees);
  trf->add_option("--max-depth", fc.max_depth, "0 = unlimited");
  trf->add_option("--mtry", fc.features_per_split, "0 = ceil(sqrt(D))");
  trf->add_option("--min-samples-leaf", fc.min_samples_leaf);
  trf->add_option("--seed", fc.seed);
  trf->add_option("--out", rf_out);

  // predict
  auto* pred = app.add_subcommand("predict", "Score feature rows with a trained model");
  std::string pr_model, pr_features, pr_out;
  pred->add_option("--model", pr_model, "RRAE (.dspm) or forest (.dspf)")->required();
  pred->add_option("--features", pr_features)->required();
  pred->add_option("--out", pr_out, "CSV path, stdout when omitted");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Compare encodings and classifiers on one split");
  std::string ev_input, ev_labels, ev_encodings = "displacement,slope@220,wavelet", ev_classifiers = "rrae,rf";
  std::string ev_train = "0-4", ev_val = "5-9", ev_rrae_runs = "0", ev_report = "report.json", ev_svg, ev_text;
  std::uint64_t ev_seed = 42;
  std::optional<double> ev_lambda_recon, ev_lambda_cls;
  std::optional<std::size_t> ev_n1, ev_n2, ev_trees;
  eval->add_option("--input", ev_input)->required();
  eval->add_option("--labels", ev_labels)->required();
  eval->add_option("--encodings", ev_encodings);
  eval->add_option("--classifiers", ev_classifiers);
  eval->add_option("--train-runs", ev_train);
  eval->add_option("--val-runs", ev_val);
  eval->add_option("--rrae-train-runs", ev_rrae_runs);
  eval->add_option("--seed", ev_seed);
  eval->add_option("--lambda-recon", ev_lambda_recon);
  eval->add_option("--lambda-cls", ev_lambda_cls);
  eval->add_option("--n1", ev_n1);
  eval->add_option("--n2", ev_n2);
  eval->add_option("--trees", ev_trees);
  eval->add_option("--report", ev_report);
  eval->add_option("--svg", ev_svg);
  eval->add_option("--text", ev_text);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage from one JSON config");
  std::string pl_config, pl_output;
  std::optional<std::uint64_t> pl_seed;
  pipe->add_option("--config", pl_config)->required();
  pipe->add_option("--seed", pl_seed, "Overrides the config seed");
  pipe->add_option("--output-dir", pl_output, "Overrides the config output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  Logger log(Logger::parse_level(log_level));
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*gen) {
      SynthConfig sc;
      if (!gen_config.empty()) sc = synth_config_from_json(read_json(gen_config));
      sc = synth_config_from_json(gen_flags, sc);
      const auto ds = generate(sc);
      const fs::path out = gen_out;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      save_trajectory_set(ds.trajectories, out);
      DatasetManifest m;
      m.scenario = "synthetic-seed-" + std::to_string(sc.seed);
      m.runs = {out.filename()};
      m.timesteps = sc.timesteps;
      fs::path manifest_path = out;
      manifest_path.replace_extension(".json");
      write_manifest(m, manifest_path);
      if (gen_truth.empty()) gen_truth = (out.parent_path() / (out.stem().string() + "_truth.csv")).string();
      write_ground_truth(ds, gen_truth);
      log.info("generated", {{"out", out.string()}, {"manifest", manifest_path.string()}, {"nodes", sc.n_nodes},
                             {"runs", sc.n_runs}, {"timesteps", sc.timesteps}});
    } else if (*pre) {
      PreprocessConfig pc;
      pc.threshold_mm = pre_threshold;
      pc.axis = parse_axis(pre_axis);
      pc.peak_step = pre_peak;
      pc.truncate = pre_truncate;
      for (const auto& p : split_list(pre_exclude)) pc.exclude_parts.push_back(std::stoll(p));
      pc.remove_rigid = !pre_keep_rigid;
      pc.balance_seed = pre_balance;
      const auto labeled = preprocess_dataset(load_input(pre_input), pc, &log);
      save_trajectory_set(labeled.trajectories, pre_out);
      write_labels_csv(labeled.trajectories, labeled.labels, pre_labels);
      log.info("preprocessed", {{"out", pre_out}, {"labels", pre_labels}, {"nodes", labeled.labels.size()}});
    } else if (*enc) {
      EncodingSpec spec;
      spec.kind = parse_encoding(enc_kind);
      spec.axis = parse_axis(enc_axis);
      spec.truncate = enc_truncate;
      spec.wavelet.levels = enc_levels;
      spec.wavelet.mode = wavelet::parse_mode(enc_mode);
      const auto fm = encode(load_input(enc_input), spec);
      save_features(fm, enc_out);
      log.info("encoded", {{"out", enc_out}, {"encoding", spec.name()}, {"rows", fm.rows()}, {"dim", fm.dim}});
    } else if (*cross) {
      const auto ts = load_input(cross_input);
      const auto counts = count_crossings(ts, cross_node, parse_axis(cross_axis));
      std::ostringstream csv;
      csv << "timestep,time_ms,crossings\n";
      for (std::size_t t = 0; t < counts.size(); ++t) csv << t << ',' << ts.time_ms()[t] << ',' << counts[t] << '\n';
      if (cross_out.empty())
        std::cout << csv.str();
      else
        write_text(cross_out, csv.str());
    } else if (*train || *trf) {
      const bool rrae = train->parsed();
      const auto& features = rrae ? tr_features : rf_features;
      const auto& input = rrae ? tr_input : rf_input;
      const auto& encoding = rrae ? tr_encoding : rf_encoding;
      if (features.empty() == (input.empty() || encoding.empty()))
        throw Error(ErrorKind::InvalidConfig, "give either --features or both --input and --encoding");
      const auto fm = features.empty() ? encode(load_input(input), parse_encoding_spec(encoding)) : load_features(features);
      auto [train_fm, y] = training_rows(fm, rrae ? tr_labels : rf_labels, parse_runs(rrae ? tr_runs : rf_runs));
      if (rrae) {
        hp.validate();
        const auto normalized = normalize_features(train_fm);
        auto model = make_rrae(normalized.dim, hp);
        model.stats = normalized.scaling;
        train_rrae(model, to_matrix(normalized), y, [&](int phase, std::size_t epoch, const LossBreakdown& l) {
          log.info("epoch", {{"phase", phase}, {"epoch", epoch}, {"l_recon", l.l_recon}, {"l_cls", l.l_cls}, {"l_total", l.l_total}});
        });
        save_model(model, tr_out);
        log.info("trained", {{"out", tr_out}, {"samples", y.size()}, {"dim", normalized.dim}});
      } else {
        const auto forest = fit_forest(train_fm, y, fc);
        save_forest(forest, rf_out);
        const auto oob = out_of_bag_accuracy(forest, train_fm, y);
        log.info("trained", {{"out", rf_out}, {"samples", y.size()}, {"oob_accuracy", oob ? nlohmann::json(*oob) : nlohmann::json()}});
      }
    } else if (*pred) {
      const auto fm = load_features(pr_features);
      if (has_magic(pr_model, "DSPF")) {
        const auto p = predict_forest(load_forest(pr_model), fm);
        write_predictions(fm, p.probability, p.label, pr_out);
      } else {
        const auto model = load_model(pr_model);
        const auto x = model.stats ? normalize_features(fm, model.stats) : fm;
        const auto p = predict(model, to_matrix(x));
        write_predictions(fm, p.probability, p.label, pr_out);
      }
    } else if (*eval) {
      const auto data = labeled_input(ev_input, ev_labels);
      ComparisonConfig cc;
      for (const auto& e : split_list(ev_encodings)) cc.encodings.push_back(parse_encoding_spec(e));
      for (const auto& c : split_list(ev_classifiers)) cc.classifiers.push_back(parse_classifier(c));
      cc.split.train_runs = parse_runs(ev_train);
      cc.split.val_runs = parse_runs(ev_val);
      cc.split.rrae_train_runs = parse_runs(ev_rrae_runs);
      cc.rrae.seed = ev_seed;
      cc.forest.seed = ev_seed;
      if (ev_lambda_recon) cc.rrae.lambda_recon = *ev_lambda_recon;
      if (ev_lambda_cls) cc.rrae.lambda_cls = *ev_lambda_cls;
      if (ev_n1) cc.rrae.n1_epochs = *ev_n1;
      if (ev_n2) cc.rrae.n2_epochs = *ev_n2;
      if (ev_trees) cc.forest.n_trees = *ev_trees;
      cc.rrae.validate();
      const auto report = compare_encodings(data, cc);
      auto j = report.to_json();
      j["provenance"] = {{"tool", kToolName}, {"version", kToolVersion}};
      write_text(ev_report, j.dump(2) + "\n");
      if (!ev_svg.empty()) write_text(ev_svg, report.to_svg());
      if (!ev_text.empty())
        write_text(ev_text, report.to_text());
      else
        std::cout << report.to_text();
    } else if (*pipe) {
      const fs::path config_path = pl_config;
      auto doc = read_json(config_path);
      if (pl_seed) doc["seed"] = *pl_seed;
      if (!pl_output.empty()) doc["output_dir"] = fs::absolute(pl_output).string();
      const auto cfg = parse_pipeline_config(doc, config_path.parent_path());
      const Logger pipeline_log(app.get_option("--log-level")->count() ? log.level() : Logger::parse_level(cfg.log_level));
      const auto result = run_pipeline(cfg, pipeline_log);
      std::cout << result.report.to_text();
      if (!result.acceptance_passed) return kExitAcceptance;
    }
  } catch (const Error& e) {
    log.log(Logger::Level::Error, "failed", {{"command", command}, {"kind", to_string(e.kind())}, {"message", e.what()}});
    return is_validation_error(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    log.log(Logger::Level::Error, "failed", {{"command", command}, {"kind", "Internal"}, {"message", e.what()}});
    return kExitRuntime;
  }
  return kExitOk;
}
