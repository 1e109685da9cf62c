#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dispersion/encoders.hpp"
#include "dispersion/evaluation.hpp"
#include "dispersion/execution.hpp"

namespace dispersion {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;          // 0 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(D))
  double sample_fraction = 1.0;        // bootstrap size relative to n, with replacement
  std::uint64_t seed = 0;

  std::size_t resolved_mtry(std::size_t dim) const;
  void validate(std::size_t dim) const;
};

/// Flat CART tree. A node is a leaf when `feature` is kLeaf.
struct TreeNode {
  static constexpr std::uint32_t kLeaf = 0xFFFFFFFFu;
  std::uint32_t feature = kLeaf;
  double threshold = 0.0;       // go left when x[feature] <= threshold
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double probability = 0.0;     // class-1 fraction at a leaf

  bool is_leaf() const { return feature == kLeaf; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // root at 0
  std::vector<std::uint32_t> in_bag_counts;  // per training sample

  double predict(std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct Forest {
  std::size_t dim = 0;
  std::vector<DecisionTree> trees;
  bool operator==(const Forest&) const = default;
};

/// Bootstrap-aggregated Gini CART trees with a random feature subset per
/// split. Deterministic given the seed; tree t draws from stream (seed, t).
Forest fit_forest(const FeatureMatrix& fm, std::span<const int> labels, const ForestConfig& cfg,
                  Execution exec = Execution::Parallel);

struct ForestPredictions {
  std::vector<double> probability;
  std::vector<int> label;
};

/// probability = mean leaf probability over trees; label = probability >= 0.5.
ForestPredictions predict_forest(const Forest& forest, const FeatureMatrix& fm, Execution exec = Execution::Parallel);

/// Out-of-bag accuracy over samples that are out of bag for at least one tree.
std::optional<double> out_of_bag_accuracy(const Forest& forest, const FeatureMatrix& fm, std::span<const int> labels);

/// Stratified fold assignment (seeded): fold index per sample.
std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

struct CrossValidationReport {
  std::vector<ConfusionMatrix> folds;
  ConfusionMatrix pooled;
};

CrossValidationReport cross_validate(const FeatureMatrix& fm, std::span<const int> labels, std::size_t folds,
                                     const ForestConfig& cfg);

/// "DSPF" | version u32 | dim u64 | tree count u32 | per tree: node count u32,
/// nodes (feature u32, threshold f64, left u32, right u32, probability f64).
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace dispersion
