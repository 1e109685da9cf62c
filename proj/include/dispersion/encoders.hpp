#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispersion/dataset.hpp"
#include "dispersion/execution.hpp"
#include "dispersion/wavelet.hpp"

namespace dispersion {

enum class EncodingKind : std::uint32_t { Displacement = 0, Fourier = 1, Wavelet = 2, Slope = 3 };

EncodingKind parse_encoding(const std::string& text);
const char* to_string(EncodingKind kind);

struct SampleIndex {
  std::int64_t node_id = 0;
  std::uint32_t run = 0;
  bool operator==(const SampleIndex&) const = default;
};

/// Per-feature standardization statistics.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool operator==(const FeatureStats&) const = default;
};

/// Encoded samples: one row per (node, run), row-major, fixed width.
struct FeatureMatrix {
  EncodingKind kind = EncodingKind::Displacement;
  Axis axis = Axis::X;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<SampleIndex> samples;
  std::size_t wavelet_levels = 0;
  wavelet::Mode wavelet_mode = wavelet::Mode::Symmetric;
  std::optional<FeatureStats> scaling;  // set once normalized

  std::size_t rows() const { return samples.size(); }
  std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

  /// Rows in the given order.
  FeatureMatrix select(std::span<const std::size_t> rows) const;

  /// Rows whose run is listed, optionally restricted to a node set.
  std::vector<std::size_t> rows_for_runs(std::span<const std::uint32_t> runs) const;

  void validate() const;

  bool operator==(const FeatureMatrix&) const = default;
};

struct WaveletConfig {
  std::size_t levels = 0;  // 0 = default floor(log2(T / 7))
  wavelet::Mode mode = wavelet::Mode::Symmetric;
};

std::size_t default_wavelet_levels(std::size_t timesteps);

/// Rows are ordered node-major, then by run.
FeatureMatrix encode_displacement(const TrajectorySet& ts, Execution exec = Execution::Parallel);
FeatureMatrix encode_fourier(const TrajectorySet& ts, Axis axis = Axis::X, Execution exec = Execution::Parallel);
FeatureMatrix encode_wavelet(const TrajectorySet& ts, Axis axis = Axis::X, WaveletConfig cfg = {},
                             Execution exec = Execution::Parallel);
FeatureMatrix encode_slope(const TrajectorySet& ts, Axis axis = Axis::X, Execution exec = Execution::Parallel);

/// One-sided DFT magnitudes |X_k|, k = 0..floor(n/2), unnormalized.
std::vector<double> magnitude_spectrum(std::span<const double> signal);

/// Cumulative crossing counts over time for one node, summed over all
/// unordered run pairs. A crossing is a strict sign change of
/// s_i(t) - s_j(t) relative to the last nonzero sign; zeros carry the sign.
std::vector<std::uint64_t> count_crossings(const TrajectorySet& ts, std::int64_t node_id, Axis axis = Axis::X);

/// Crossing count series of a single pair of signals.
std::vector<std::uint64_t> pair_crossings(std::span<const double> a, std::span<const double> b);

/// Standardizes columns. Computes statistics from `fm` when `stats` is empty.
/// Standard deviations are floored at 1e-12.
FeatureMatrix normalize_features(const FeatureMatrix& fm, const std::optional<FeatureStats>& stats = std::nullopt);

inline constexpr double kStdFloor = 1e-12;

/// Container: "DSPX" | version u32 | kind u32 | axis u32 | rows u64 | dim u64
///   | wavelet levels u32 | wavelet mode u32 | has_scaling u32
///   | samples (i64 node, u32 run)[rows] | values f64[rows*dim]
///   | if scaling: mean f64[dim] | stddev f64[dim]
/// A JSON sidecar (<path>.json) describes the same metadata for humans.
void save_features(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

}  // namespace dispersion
