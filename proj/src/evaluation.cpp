#include "dispersion/evaluation.hpp"

#include <cmath>

#include "dispersion/error.hpp"

namespace dispersion {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::optional<double> ConfusionMatrix::recall_dispersed() const { return ratio(tp, tp + fn); }
std::optional<double> ConfusionMatrix::recall_non_dispersed() const { return ratio(tn, tn + fp); }
std::optional<double> ConfusionMatrix::precision_dispersed() const { return ratio(tp, tp + fp); }
std::optional<double> ConfusionMatrix::precision_non_dispersed() const { return ratio(tn, tn + fn); }
std::optional<double> ConfusionMatrix::accuracy() const { return ratio(tp + tn, total()); }

std::optional<double> ConfusionMatrix::balanced_accuracy() const {
  const auto a = recall_dispersed(), b = recall_non_dispersed();
  if (!a || !b) return std::nullopt;
  return 0.5 * (*a + *b);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  tp += o.tp;
  return *this;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size())
    throw Error(ErrorKind::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                               std::to_string(predicted.size()) + " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1))
      throw Error(ErrorKind::NonBinaryLabel, "label at index " + std::to_string(i) + " is not 0/1");
    if (t == 1) (p == 1 ? cm.tp : cm.fn)++;
    else (p == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

RecognitionRates recognition_rates(const ConfusionMatrix& cm) {
  auto pct = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return std::round(10000.0 * static_cast<double>(num) / static_cast<double>(den)) / 100.0;
  };
  RecognitionRates r;
  r.rate[0][0] = pct(cm.tn, cm.tn + cm.fp);
  r.rate[0][1] = pct(cm.fp, cm.tn + cm.fp);
  r.rate[1][0] = pct(cm.fn, cm.fn + cm.tp);
  r.rate[1][1] = pct(cm.tp, cm.fn + cm.tp);
  return r;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  const auto rates = recognition_rates(cm);
  return {
      {"tn", cm.tn},
      {"fp", cm.fp},
      {"fn", cm.fn},
      {"tp", cm.tp},
      {"accuracy", optional_json(cm.accuracy())},
      {"balanced_accuracy", optional_json(cm.balanced_accuracy())},
      {"recall_dispersed", optional_json(cm.recall_dispersed())},
      {"recall_non_dispersed", optional_json(cm.recall_non_dispersed())},
      {"precision_dispersed", optional_json(cm.precision_dispersed())},
      {"precision_non_dispersed", optional_json(cm.precision_non_dispersed())},
      {"recognition_rates_pct",
       {{"non_dispersed", {optional_json(rates.rate[0][0]), optional_json(rates.rate[0][1])}},
        {"dispersed", {optional_json(rates.rate[1][0]), optional_json(rates.rate[1][1])}}}},
  };
}

}  // namespace dispersion
