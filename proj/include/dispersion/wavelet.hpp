#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dispersion::wavelet {

/// Daubechies-4 (8-tap) analysis low-pass filter.
inline constexpr std::array<double, 8> kDb4Lowpass = {
    -0.010597401785069032, 0.032883011666885200, 0.030841381835560764, -0.187034811719093090,
    -0.027983769416859854, 0.630880767929858900, 0.714846570552915700, 0.230377813308896500,
};
inline constexpr std::size_t kFilterLength = kDb4Lowpass.size();

/// Signal extension beyond the boundaries.
///   Symmetric: half-point reflection (x[-1] = x[0])
///   Zero:      zero padding
///   Periodic:  wrap-around
enum class Mode { Symmetric, Zero, Periodic };

Mode parse_mode(const std::string& text);
const char* to_string(Mode mode);

const std::array<double, 8>& highpass();

/// Sum of squared low-pass taps minus one; checked at startup.
double filter_energy_error();

/// Coefficient count of one analysis step on a length-n signal.
inline constexpr std::size_t band_length(std::size_t n) { return (n + kFilterLength - 1) / 2; }

/// floor(log2(n / 7)), the deepest decomposition before bands shrink below
/// the filter support; 0 when n < 7.
std::size_t max_level(std::size_t n);

/// One analysis step: approximation and detail bands.
void dwt(std::span<const double> signal, Mode mode, std::vector<double>& approx, std::vector<double>& detail);

/// One synthesis step producing `length` samples.
std::vector<double> idwt(std::span<const double> approx, std::span<const double> detail, Mode mode,
                         std::size_t length);

/// Multi-level decomposition. bands = [a_L, d_L, d_{L-1}, ..., d_1].
struct Decomposition {
  std::vector<std::vector<double>> bands;
  std::vector<std::size_t> signal_lengths;  // input length at each level, level 1 first
};

Decomposition wavedec(std::span<const double> signal, std::size_t levels, Mode mode);
std::vector<double> waverec(const Decomposition& dec, Mode mode);

/// Total coefficient count of an L-level decomposition of a length-n signal.
std::size_t coefficient_count(std::size_t n, std::size_t levels);

/// Flattened [a_L, d_L, ..., d_1] and its inverse.
std::vector<double> flatten(const Decomposition& dec);
Decomposition unflatten(std::span<const double> coeffs, std::size_t n, std::size_t levels);

}  // namespace dispersion::wavelet
