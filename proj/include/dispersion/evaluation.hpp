#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

namespace dispersion {

/// Binary confusion counts; class 1 = dispersed. Ratios with an empty
/// denominator are undefined (nullopt), never 0.
struct ConfusionMatrix {
  std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;

  std::uint64_t total() const { return tn + fp + fn + tp; }
  std::optional<double> recall_dispersed() const;
  std::optional<double> recall_non_dispersed() const;
  std::optional<double> precision_dispersed() const;
  std::optional<double> precision_non_dispersed() const;
  std::optional<double> accuracy() const;
  /// Mean of the two per-class recalls; defined when both are.
  std::optional<double> balanced_accuracy() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted);

/// Row-normalized percentages [true class][predicted class], rounded to
/// two decimals, as reported in confusion-matrix figures.
struct RecognitionRates {
  std::optional<double> rate[2][2];
};
RecognitionRates recognition_rates(const ConfusionMatrix& cm);

nlohmann::json to_json(const ConfusionMatrix& cm);

}  // namespace dispersion
