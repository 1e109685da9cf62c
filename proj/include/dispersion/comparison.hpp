#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dispersion/dataset.hpp"
#include "dispersion/encoders.hpp"
#include "dispersion/evaluation.hpp"
#include "dispersion/forest.hpp"
#include "dispersion/preprocess.hpp"
#include "dispersion/rrae.hpp"

namespace dispersion {

struct EncodingSpec {
  EncodingKind kind = EncodingKind::Displacement;
  Axis axis = Axis::X;
  std::optional<std::size_t> truncate;  // keep timesteps [0, truncate) before encoding
  WaveletConfig wavelet;

  std::string name() const;
  nlohmann::json to_json() const;
};

/// Parses "slope", "wavelet", "slope@220" (truncated), "wavelet:y".
EncodingSpec parse_encoding_spec(const std::string& text);

enum class ClassifierKind { Rrae, RandomForest };
ClassifierKind parse_classifier(const std::string& text);
const char* to_string(ClassifierKind kind);

/// Whole runs go to training or validation. The forest trains on
/// `train_runs`; the RRAE trains on `rrae_train_runs` (a single run by
/// default). Both are scored on `val_runs`.
struct SplitConfig {
  std::vector<std::uint32_t> train_runs = {0, 1, 2, 3, 4};
  std::vector<std::uint32_t> val_runs = {5, 6, 7, 8, 9};
  std::vector<std::uint32_t> rrae_train_runs = {0};

  void validate(std::size_t runs) const;
  nlohmann::json to_json() const;
};

/// Trajectories restricted to the analysed nodes, with their labels in
/// node order.
struct LabeledDataset {
  TrajectorySet trajectories;
  std::vector<DispersionLabel> labels;
};

struct ComparisonEntry {
  EncodingSpec encoding;
  ClassifierKind classifier = ClassifierKind::Rrae;
  std::string config_hash;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  ConfusionMatrix confusion;
  std::optional<TrainingHistory> history;  // RRAE only
  std::optional<double> oob_accuracy;      // forest only
};

struct ComparisonReport {
  std::vector<ComparisonEntry> entries;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
  std::string to_text() const;
  std::string to_svg() const;
};

struct ComparisonConfig {
  std::vector<EncodingSpec> encodings;
  std::vector<ClassifierKind> classifiers;
  SplitConfig split;
  RraeHyperparams rrae;
  ForestConfig forest;
};

/// Trains every (encoding, classifier) pair under the same split and seeds.
/// Entries follow encoding order, then classifier order.
ComparisonReport compare_encodings(const LabeledDataset& dataset, const ComparisonConfig& cfg);

/// Encodes a trajectory set as described by an EncodingSpec.
FeatureMatrix encode(const TrajectorySet& ts, const EncodingSpec& spec, Execution exec = Execution::Parallel);

/// 64-bit FNV-1a as 16 hex digits.
std::string hash_hex(const std::string& text);

}  // namespace dispersion
