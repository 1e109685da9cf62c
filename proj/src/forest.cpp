#include "dispersion/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dispersion/binary_io.hpp"
#include "dispersion/error.hpp"
#include "dispersion/rng.hpp"

namespace dispersion {

namespace {

constexpr char kForestMagic[4] = {'D', 'S', 'P', 'F'};
constexpr std::uint32_t kForestVersion = 1;

struct SplitChoice {
  bool found = false;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double score = 0.0;  // weighted child Gini impurity (times sample count)
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& fm, std::span<const int> labels, const ForestConfig& cfg, Rng& rng)
      : fm_(fm), labels_(labels), cfg_(cfg), rng_(rng), mtry_(cfg.resolved_mtry(fm.dim)) {
    features_.resize(fm.dim);
    std::iota(features_.begin(), features_.end(), 0u);
  }

  std::vector<TreeNode> build(std::vector<std::size_t> samples) {
    std::vector<TreeNode> nodes;
    struct Pending {
      std::uint32_t node;
      std::vector<std::size_t> samples;
      std::size_t depth;
    };
    nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::move(samples), 0});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      std::size_t ones = 0;
      for (auto s : job.samples) ones += static_cast<std::size_t>(labels_[s]);
      const std::size_t n = job.samples.size();
      nodes[job.node].probability = static_cast<double>(ones) / static_cast<double>(n);
      const bool pure = ones == 0 || ones == n;
      const bool depth_limited = cfg_.max_depth != 0 && job.depth >= cfg_.max_depth;
      if (pure || depth_limited || n < 2 * cfg_.min_samples_leaf) continue;

      const auto split = best_split(job.samples);
      if (!split.found) continue;

      std::vector<std::size_t> left, right;
      for (auto s : job.samples) (fm_.row(s)[split.feature] <= split.threshold ? left : right).push_back(s);
      const auto left_id = static_cast<std::uint32_t>(nodes.size());
      nodes.emplace_back();
      const auto right_id = static_cast<std::uint32_t>(nodes.size());
      nodes.emplace_back();
      auto& parent = nodes[job.node];
      parent.feature = split.feature;
      parent.threshold = split.threshold;
      parent.left = left_id;
      parent.right = right_id;
      parent.probability = 0.0;
      // right pushed first so the left subtree is expanded first
      stack.push_back({right_id, std::move(right), job.depth + 1});
      stack.push_back({left_id, std::move(left), job.depth + 1});
    }
    return nodes;
  }

 private:
  SplitChoice best_split(const std::vector<std::size_t>& samples) {
    // partial Fisher-Yates draw of mtry candidate features
    for (std::size_t i = 0; i < mtry_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.index(features_.size() - i));
      std::swap(features_[i], features_[j]);
    }
    std::vector<std::uint32_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(candidates.begin(), candidates.end());

    const std::size_t n = samples.size();
    std::size_t total_ones = 0;
    for (auto s : samples) total_ones += static_cast<std::size_t>(labels_[s]);

    SplitChoice best;
    std::vector<std::pair<double, int>> column(n);
    for (auto f : candidates) {
      for (std::size_t i = 0; i < n; ++i) column[i] = {fm_.row(samples[i])[f], labels_[samples[i]]};
      std::sort(column.begin(), column.end());
      std::size_t left_ones = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_ones += static_cast<std::size_t>(column[i].second);
        if (column[i].first == column[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < cfg_.min_samples_leaf || nr < cfg_.min_samples_leaf) continue;
        const double l1 = static_cast<double>(left_ones), l0 = static_cast<double>(nl - left_ones);
        const double r1 = static_cast<double>(total_ones - left_ones), r0 = static_cast<double>(nr - (total_ones - left_ones));
        const double score = 2.0 * l1 * l0 / static_cast<double>(nl) + 2.0 * r1 * r0 / static_cast<double>(nr);
        if (!best.found || score < best.score) {
          const double lo = column[i].first, hi = column[i + 1].first;
          double mid = lo + 0.5 * (hi - lo);
          if (!(mid < hi)) mid = lo;
          best = {true, f, mid, score};
        }
      }
    }
    return best;
  }

  const FeatureMatrix& fm_;
  std::span<const int> labels_;
  const ForestConfig& cfg_;
  Rng& rng_;
  std::size_t mtry_;
  std::vector<std::uint32_t> features_;
};

void check_inputs(const FeatureMatrix& fm, std::span<const int> labels) {
  if (labels.size() != fm.rows())
    throw Error(ErrorKind::LengthMismatch, std::to_string(fm.rows()) + " rows but " + std::to_string(labels.size()) + " labels");
  bool seen[2] = {false, false};
  for (int v : labels) {
    if (v != 0 && v != 1) throw Error(ErrorKind::NonBinaryLabel, "labels must be 0 or 1");
    seen[v] = true;
  }
  if (!seen[0] || !seen[1]) throw Error(ErrorKind::SingleClass, "training labels contain a single class");
}

}  // namespace

std::size_t ForestConfig::resolved_mtry(std::size_t dim) const {
  if (features_per_split != 0) return features_per_split;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim)))));
}

void ForestConfig::validate(std::size_t dim) const {
  if (n_trees < 1) throw Error(ErrorKind::InvalidConfig, "forest needs at least one tree");
  if (dim < 1) throw Error(ErrorKind::DimensionMismatch, "feature dimension must be positive");
  const auto mtry = resolved_mtry(dim);
  if (mtry < 1 || mtry > dim)
    throw Error(ErrorKind::InvalidConfig, "features_per_split " + std::to_string(mtry) + " outside [1, " + std::to_string(dim) + "]");
  if (min_samples_leaf < 1) throw Error(ErrorKind::InvalidConfig, "min_samples_leaf must be at least 1");
  if (!(sample_fraction > 0.0)) throw Error(ErrorKind::InvalidConfig, "sample_fraction must be positive");
}

double DecisionTree::predict(std::span<const double> x) const {
  std::uint32_t i = 0;
  while (!nodes[i].is_leaf()) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].probability;
}

Forest fit_forest(const FeatureMatrix& fm, std::span<const int> labels, const ForestConfig& cfg, Execution exec) {
  cfg.validate(fm.dim);
  check_inputs(fm, labels);
  const std::size_t n = fm.rows();
  const auto draws = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.sample_fraction * static_cast<double>(n))));
  Forest forest;
  forest.dim = fm.dim;
  forest.trees.resize(cfg.n_trees);
  for_each_index(exec, cfg.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    auto& tree = forest.trees[t];
    tree.in_bag_counts.assign(n, 0);
    std::vector<std::size_t> sample(draws);
    for (auto& s : sample) {
      s = static_cast<std::size_t>(rng.index(n));
      ++tree.in_bag_counts[s];
    }
    TreeBuilder builder(fm, labels, cfg, rng);
    tree.nodes = builder.build(std::move(sample));
  });
  return forest;
}

ForestPredictions predict_forest(const Forest& forest, const FeatureMatrix& fm, Execution exec) {
  if (fm.dim != forest.dim)
    throw Error(ErrorKind::DimensionMismatch, "features have dimension " + std::to_string(fm.dim) + ", forest expects " +
                                                  std::to_string(forest.dim));
  if (forest.trees.empty()) throw Error(ErrorKind::InvalidConfig, "forest has no trees");
  ForestPredictions p;
  p.probability.assign(fm.rows(), 0.0);
  p.label.assign(fm.rows(), 0);
  for_each_index(exec, fm.rows(), [&](std::size_t i) {
    double sum = 0.0;
    for (const auto& tree : forest.trees) sum += tree.predict(fm.row(i));
    const double prob = sum / static_cast<double>(forest.trees.size());
    p.probability[i] = prob;
    p.label[i] = prob >= 0.5 ? 1 : 0;
  });
  return p;
}

std::optional<double> out_of_bag_accuracy(const Forest& forest, const FeatureMatrix& fm, std::span<const int> labels) {
  if (labels.size() != fm.rows()) throw Error(ErrorKind::LengthMismatch, "labels do not match rows");
  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    double sum = 0.0;
    std::size_t votes = 0;
    for (const auto& tree : forest.trees) {
      if (tree.in_bag_counts.size() != fm.rows())
        throw Error(ErrorKind::DimensionMismatch, "out-of-bag accuracy needs the training matrix");
      if (tree.in_bag_counts[i] != 0) continue;
      sum += tree.predict(fm.row(i));
      ++votes;
    }
    if (votes == 0) continue;
    ++scored;
    correct += ((sum / static_cast<double>(votes) >= 0.5 ? 1 : 0) == labels[i]) ? 1 : 0;
  }
  if (scored == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(scored);
}

std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::TooFewSamples, "cross-validation needs at least 2 folds");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorKind::NonBinaryLabel, "labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < folds)
      throw Error(ErrorKind::TooFewSamples, "class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                                                " samples for " + std::to_string(folds) + " folds");
  Rng rng(seed);
  std::vector<std::size_t> fold(labels.size(), 0);
  std::size_t position = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (auto i : members) fold[i] = position++ % folds;
  }
  return fold;
}

CrossValidationReport cross_validate(const FeatureMatrix& fm, std::span<const int> labels, std::size_t folds,
                                     const ForestConfig& cfg) {
  if (labels.size() != fm.rows()) throw Error(ErrorKind::LengthMismatch, "labels do not match rows");
  const auto assignment = stratified_folds(labels, folds, cfg.seed);
  CrossValidationReport report;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == f ? test : train).push_back(i);
    std::vector<int> train_y, test_y;
    for (auto i : train) train_y.push_back(labels[i]);
    for (auto i : test) test_y.push_back(labels[i]);
    const auto forest = fit_forest(fm.select(train), train_y, cfg);
    const auto pred = predict_forest(forest, fm.select(test));
    report.folds.push_back(confusion(test_y, pred.label));
    report.pooled += report.folds.back();
  }
  return report;
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  io::BinaryWriter w(path.string());
  w.bytes(kForestMagic, 4);
  w.value<std::uint32_t>(kForestVersion);
  w.value<std::uint64_t>(forest.dim);
  w.value<std::uint32_t>(static_cast<std::uint32_t>(forest.trees.size()));
  for (const auto& tree : forest.trees) {
    w.value<std::uint32_t>(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      w.value<std::uint32_t>(node.feature);
      w.value<double>(node.threshold);
      w.value<std::uint32_t>(node.left);
      w.value<std::uint32_t>(node.right);
      w.value<double>(node.probability);
    }
  }
  w.close();
}

Forest load_forest(const std::filesystem::path& path) {
  io::BinaryReader r(path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kForestMagic))
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' is not a DSPF forest file");
  if (const auto v = r.value<std::uint32_t>(); v != kForestVersion)
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has forest format version " + std::to_string(v));
  Forest forest;
  forest.dim = r.value<std::uint64_t>();
  const auto count = r.value<std::uint32_t>();
  forest.trees.resize(count);
  for (auto& tree : forest.trees) {
    const auto nodes = r.value<std::uint32_t>();
    tree.nodes.resize(nodes);
    for (auto& node : tree.nodes) {
      node.feature = r.value<std::uint32_t>();
      node.threshold = r.value<double>();
      node.left = r.value<std::uint32_t>();
      node.right = r.value<std::uint32_t>();
      node.probability = r.value<double>();
      const bool bad_split = !node.is_leaf() && (node.feature >= forest.dim || node.left >= nodes || node.right >= nodes);
      if (bad_split || !(node.probability >= 0.0 && node.probability <= 1.0))
        throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' contains a malformed tree node");
    }
    if (nodes == 0) throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' contains an empty tree");
  }
  return forest;
}

}  // namespace dispersion
