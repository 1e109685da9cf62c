#include "dispersion/comparison.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "dispersion/error.hpp"

namespace dispersion {

namespace {

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json rrae_json(const RraeHyperparams& hp) {
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

nlohmann::json forest_json(const ForestConfig& f) {
  return {{"trees", f.n_trees},
          {"max_depth", f.max_depth},
          {"min_samples_leaf", f.min_samples_leaf},
          {"mtry", f.features_per_split},
          {"sample_fraction", f.sample_fraction},
          {"seed", f.seed}};
}

}  // namespace

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string EncodingSpec::name() const {
  std::string n = to_string(kind);
  if (axis != Axis::X) n += std::string(":") + dispersion::to_string(axis);
  if (truncate) n += "@" + std::to_string(*truncate);
  return n;
}

nlohmann::json EncodingSpec::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)}, {"axis", dispersion::to_string(axis)}};
  j["truncate"] = truncate ? nlohmann::json(*truncate) : nlohmann::json(nullptr);
  if (kind == EncodingKind::Wavelet) j["wavelet"] = {{"levels", wavelet.levels}, {"mode", wavelet::to_string(wavelet.mode)}};
  return j;
}

EncodingSpec parse_encoding_spec(const std::string& text) {
  EncodingSpec spec;
  std::string body = text;
  if (const auto at = body.find('@'); at != std::string::npos) {
    try {
      spec.truncate = static_cast<std::size_t>(std::stoul(body.substr(at + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, "bad truncation in encoding '" + text + "'");
    }
    body = body.substr(0, at);
  }
  if (const auto colon = body.find(':'); colon != std::string::npos) {
    spec.axis = parse_axis(body.substr(colon + 1));
    body = body.substr(0, colon);
  }
  spec.kind = parse_encoding(body);
  return spec;
}

ClassifierKind parse_classifier(const std::string& text) {
  if (text == "rrae" || text == "rrae-mlp") return ClassifierKind::Rrae;
  if (text == "rf" || text == "forest" || text == "random-forest") return ClassifierKind::RandomForest;
  throw Error(ErrorKind::InvalidConfig, "unknown classifier '" + text + "'");
}

const char* to_string(ClassifierKind kind) { return kind == ClassifierKind::Rrae ? "rrae" : "rf"; }

void SplitConfig::validate(std::size_t runs) const {
  auto check = [runs](const std::vector<std::uint32_t>& list, const char* what) {
    if (list.empty()) throw Error(ErrorKind::InvalidConfig, std::string(what) + " is empty");
    for (auto r : list)
      if (r >= runs)
        throw Error(ErrorKind::InvalidConfig, std::string(what) + " references run " + std::to_string(r) + " of " + std::to_string(runs));
  };
  check(train_runs, "train_runs");
  check(val_runs, "val_runs");
  check(rrae_train_runs, "rrae_train_runs");
  for (auto r : val_runs) {
    if (std::find(train_runs.begin(), train_runs.end(), r) != train_runs.end() ||
        std::find(rrae_train_runs.begin(), rrae_train_runs.end(), r) != rrae_train_runs.end())
      throw Error(ErrorKind::InvalidConfig, "run " + std::to_string(r) + " is in both training and validation");
  }
}

nlohmann::json SplitConfig::to_json() const {
  return {{"train_runs", train_runs}, {"val_runs", val_runs}, {"rrae_train_runs", rrae_train_runs}};
}

FeatureMatrix encode(const TrajectorySet& ts, const EncodingSpec& spec, Execution exec) {
  const TrajectorySet* source = &ts;
  TrajectorySet truncated;
  if (spec.truncate && *spec.truncate != ts.timestep_count()) {
    truncated = truncate_timesteps(ts, *spec.truncate);
    source = &truncated;
  }
  switch (spec.kind) {
    case EncodingKind::Displacement: return encode_displacement(*source, exec);
    case EncodingKind::Fourier: return encode_fourier(*source, spec.axis, exec);
    case EncodingKind::Wavelet: return encode_wavelet(*source, spec.axis, spec.wavelet, exec);
    case EncodingKind::Slope: return encode_slope(*source, spec.axis, exec);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown encoding kind");
}

ComparisonReport compare_encodings(const LabeledDataset& dataset, const ComparisonConfig& cfg) {
  const auto& ts = dataset.trajectories;
  if (dataset.labels.size() != ts.node_count())
    throw Error(ErrorKind::LengthMismatch, "labels do not cover the dataset nodes");
  if (cfg.encodings.empty() || cfg.classifiers.empty())
    throw Error(ErrorKind::InvalidConfig, "comparison needs at least one encoding and one classifier");
  cfg.split.validate(ts.run_count());

  std::unordered_map<std::int64_t, int> label_of;
  std::size_t dispersed = 0;
  for (const auto& l : dataset.labels) {
    label_of[l.node_id] = l.y;
    dispersed += static_cast<std::size_t>(l.y);
  }

  ComparisonReport report;
  report.metadata = {{"dataset",
                      {{"hash", hash_hex(std::to_string(content_hash(ts)))},
                       {"nodes", ts.node_count()},
                       {"runs", ts.run_count()},
                       {"timesteps", ts.timestep_count()},
                       {"dispersed", dispersed},
                       {"non_dispersed", ts.node_count() - dispersed}}},
                     {"split", cfg.split.to_json()},
                     {"rrae", rrae_json(cfg.rrae)},
                     {"forest", forest_json(cfg.forest)}};

  for (const auto& spec : cfg.encodings) {
    const FeatureMatrix features = encode(ts, spec);
    for (auto classifier : cfg.classifiers) {
      ComparisonEntry entry;
      entry.encoding = spec;
      entry.classifier = classifier;
      nlohmann::json identity = {{"encoding", spec.to_json()},
                                 {"classifier", to_string(classifier)},
                                 {"split", cfg.split.to_json()},
                                 {"dataset", report.metadata["dataset"]["hash"]}};
      identity["params"] = classifier == ClassifierKind::Rrae ? rrae_json(cfg.rrae) : forest_json(cfg.forest);
      entry.config_hash = hash_hex(identity.dump());

      const auto& train_runs = classifier == ClassifierKind::Rrae ? cfg.split.rrae_train_runs : cfg.split.train_runs;
      const auto train = features.select(features.rows_for_runs(train_runs));
      const auto val = features.select(features.rows_for_runs(cfg.split.val_runs));
      std::vector<int> train_y, val_y;
      for (const auto& s : train.samples) train_y.push_back(label_of.at(s.node_id));
      for (const auto& s : val.samples) val_y.push_back(label_of.at(s.node_id));
      entry.train_samples = train.rows();
      entry.val_samples = val.rows();

      if (classifier == ClassifierKind::Rrae) {
        const auto train_n = normalize_features(train);
        const auto val_n = normalize_features(val, train_n.scaling);
        auto model = make_rrae(train_n.dim, cfg.rrae);
        model.stats = train_n.scaling;
        entry.history = train_rrae(model, to_matrix(train_n), train_y);
        entry.confusion = confusion(val_y, predict(model, to_matrix(val_n)).label);
      } else {
        const auto forest = fit_forest(train, train_y, cfg.forest);
        entry.oob_accuracy = out_of_bag_accuracy(forest, train, train_y);
        entry.confusion = confusion(val_y, predict_forest(forest, val).label);
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j = metadata;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item = {{"encoding", e.encoding.name()},
                           {"encoding_spec", e.encoding.to_json()},
                           {"classifier", to_string(e.classifier)},
                           {"config_hash", e.config_hash},
                           {"train_samples", e.train_samples},
                           {"val_samples", e.val_samples},
                           {"metrics", dispersion::to_json(e.confusion)}};
    if (e.history) {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& l : e.history->phase1) h.push_back({{"phase", 1}, {"l_recon", l.l_recon}, {"l_cls", l.l_cls}, {"l_total", l.l_total}});
      for (const auto& l : e.history->phase3) h.push_back({{"phase", 3}, {"l_recon", l.l_recon}, {"l_cls", l.l_cls}, {"l_total", l.l_total}});
      item["training"] = std::move(h);
    }
    if (e.oob_accuracy) item["oob_accuracy"] = *e.oob_accuracy;
    j["entries"].push_back(std::move(item));
  }
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return entries[a].confusion.balanced_accuracy().value_or(-1.0) > entries[b].confusion.balanced_accuracy().value_or(-1.0);
  });
  j["ranking"] = nlohmann::json::array();
  for (auto i : order) {
    const auto& e = entries[i];
    const auto rates = recognition_rates(e.confusion);
    j["ranking"].push_back({{"encoding", e.encoding.name()},
                            {"classifier", to_string(e.classifier)},
                            {"balanced_accuracy", optional_json(e.confusion.balanced_accuracy())},
                            {"non_dispersed_pct", optional_json(rates.rate[0][0])},
                            {"dispersed_pct", optional_json(rates.rate[1][1])}});
  }
  return j;
}

std::string ComparisonReport::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(18) << "encoding" << std::setw(12) << "classifier" << std::right << std::setw(16)
      << "non-dispersed %" << std::setw(13) << "dispersed %" << std::setw(12) << "balanced %" << std::setw(10) << "val n" << '\n';
  for (const auto& e : entries) {
    out << std::left << std::setw(18) << e.encoding.name() << std::setw(12) << to_string(e.classifier) << std::right
        << std::setw(16) << percent(e.confusion.recall_non_dispersed()) << std::setw(13)
        << percent(e.confusion.recall_dispersed()) << std::setw(12) << percent(e.confusion.balanced_accuracy())
        << std::setw(10) << e.val_samples << '\n';
  }
  return out.str();
}

std::string ComparisonReport::to_svg() const {
  const int bar = 18, gap = 6, group = 2 * bar + 3 * gap, left = 220, width = 720;
  const int height = 60 + group * static_cast<int>(entries.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">Per-class recognition rate (%)</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"30\" width=\"12\" height=\"12\" fill=\"#4c78a8\"/><text x=\"" << left + 16
      << "\" y=\"41\">non-dispersed</text>\n";
  svg << "<rect x=\"" << left + 130 << "\" y=\"30\" width=\"12\" height=\"12\" fill=\"#e45756\"/><text x=\"" << left + 146
      << "\" y=\"41\">dispersed</text>\n";
  const double scale = (width - left - 60) / 100.0;
  int y = 55;
  for (const auto& e : entries) {
    svg << "<text x=\"10\" y=\"" << y + bar + 4 << "\">" << e.encoding.name() << " / " << to_string(e.classifier) << "</text>\n";
    const std::optional<double> rates[2] = {e.confusion.recall_non_dispersed(), e.confusion.recall_dispersed()};
    const char* colors[2] = {"#4c78a8", "#e45756"};
    for (int c = 0; c < 2; ++c) {
      const double pct = rates[c].value_or(0.0) * 100.0;
      const int by = y + c * (bar + gap);
      svg << "<rect x=\"" << left << "\" y=\"" << by << "\" width=\"" << std::fixed << std::setprecision(1) << pct * scale
          << "\" height=\"" << bar << "\" fill=\"" << colors[c] << "\"/>";
      svg << "<text x=\"" << left + pct * scale + 4 << "\" y=\"" << by + bar - 5 << "\">" << percent(rates[c]) << "</text>\n";
    }
    y += group;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dispersion
