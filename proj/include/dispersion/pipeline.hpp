#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dispersion/comparison.hpp"
#include "dispersion/synthgen.hpp"

namespace dispersion {

inline constexpr const char* kToolName = "dispersion";
inline constexpr const char* kToolVersion = "1.0.0";

/// JSON-lines logger on stderr.
class Logger {
 public:
  enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };
  explicit Logger(Level level = Level::Info) : level_(level) {}

  void log(Level level, const std::string& event, nlohmann::json fields = nlohmann::json::object()) const;
  void info(const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    log(Level::Info, event, std::move(fields));
  }
  void warn(const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    log(Level::Warn, event, std::move(fields));
  }
  void debug(const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    log(Level::Debug, event, std::move(fields));
  }
  Level level() const { return level_; }

  static Level parse_level(const std::string& text);

 private:
  Level level_;
};

struct PreprocessConfig {
  double threshold_mm = 5.0;
  Axis axis = Axis::X;
  std::optional<std::size_t> peak_step;
  std::optional<std::size_t> truncate;
  std::vector<std::int64_t> exclude_parts;
  bool remove_rigid = true;
  std::optional<std::uint64_t> balance_seed;  // no balancing when absent

  LabelingConfig labeling() const;
};

/// filter parts -> remove rigid motion -> truncate -> label -> balance.
/// Labels of the returned dataset are in node order.
LabeledDataset preprocess_dataset(const TrajectorySet& ts, const PreprocessConfig& cfg, const Logger* log = nullptr);

struct PipelineConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<SynthConfig> generate;
  PreprocessConfig preprocess;
  ComparisonConfig comparison;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  std::string log_level = "info";
  std::optional<double> min_balanced_accuracy;  // acceptance gate for exit code 3
  nlohmann::json source;                         // canonical config document
};

/// Parses and validates a pipeline document. Missing keys take defaults;
/// seeds not given explicitly derive from the global seed.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Canonical form used for hashing: the parsed config re-serialized with
/// every default made explicit.
nlohmann::json canonical_config(const PipelineConfig& cfg);

struct Provenance {
  std::string tool;
  std::string version;
  std::string config_hash;
  std::string dataset_hash;
  nlohmann::json to_json() const;
};

Provenance version_and_provenance(const PipelineConfig& cfg, const TrajectorySet* dataset = nullptr);

struct PipelineResult {
  ComparisonReport report;
  nlohmann::json report_json;
  Provenance provenance;
  std::vector<std::filesystem::path> artifacts;
  bool acceptance_passed = true;
};

/// Runs every stage, writing artifacts only under cfg.output_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg, const Logger& log);

// JSON mappings shared with the CLI.
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});
nlohmann::json to_json(const SynthConfig& cfg);
RraeHyperparams rrae_from_json(const nlohmann::json& j, RraeHyperparams base = {});
nlohmann::json to_json(const RraeHyperparams& hp);
ForestConfig forest_from_json(const nlohmann::json& j, ForestConfig base = {});
nlohmann::json to_json(const ForestConfig& cfg);

/// `node_id,part_id,y,spread_mm,peak_timestep`
void write_labels_csv(const TrajectorySet& ts, const std::vector<DispersionLabel>& labels,
                      const std::filesystem::path& path);
/// Reads the labels CSV back as node_id -> y.
std::vector<std::pair<std::int64_t, int>> read_labels_csv(const std::filesystem::path& path);

}  // namespace dispersion
