#include "dispersion/wavelet.hpp"

#include <cmath>

#include "dispersion/error.hpp"

namespace dispersion::wavelet {

namespace {

constexpr std::array<double, 8> make_highpass() {
  std::array<double, 8> g{};
  for (std::size_t k = 0; k < kFilterLength; ++k) {
    const double sign = (k % 2 == 0) ? -1.0 : 1.0;
    g[k] = sign * kDb4Lowpass[kFilterLength - 1 - k];
  }
  return g;
}

constexpr std::array<double, 8> kDb4Highpass = make_highpass();

/// x_ext[k] for any integer k under the extension mode.
inline double extended(std::span<const double> x, std::ptrdiff_t k, Mode mode) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (k >= 0 && k < n) return x[static_cast<std::size_t>(k)];
  switch (mode) {
    case Mode::Zero:
      return 0.0;
    case Mode::Periodic: {
      auto m = k % n;
      if (m < 0) m += n;
      return x[static_cast<std::size_t>(m)];
    }
    case Mode::Symmetric: {
      // period 2n reflection: x[-1] = x[0], x[n] = x[n-1]
      auto m = k % (2 * n);
      if (m < 0) m += 2 * n;
      return m < n ? x[static_cast<std::size_t>(m)] : x[static_cast<std::size_t>(2 * n - 1 - m)];
    }
  }
  return 0.0;
}

}  // namespace

Mode parse_mode(const std::string& text) {
  if (text == "symmetric") return Mode::Symmetric;
  if (text == "zero") return Mode::Zero;
  if (text == "periodic") return Mode::Periodic;
  throw Error(ErrorKind::InvalidConfig, "unknown wavelet mode '" + text + "'");
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Symmetric: return "symmetric";
    case Mode::Zero: return "zero";
    case Mode::Periodic: return "periodic";
  }
  return "?";
}

const std::array<double, 8>& highpass() { return kDb4Highpass; }

double filter_energy_error() {
  double e = 0.0;
  for (double h : kDb4Lowpass) e += h * h;
  return e - 1.0;
}

std::size_t max_level(std::size_t n) {
  if (n < kFilterLength - 1) return 0;
  return static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n) / static_cast<double>(kFilterLength - 1))));
}

void dwt(std::span<const double> signal, Mode mode, std::vector<double>& approx, std::vector<double>& detail) {
  if (signal.empty()) throw Error(ErrorKind::TooShortForLevels, "empty signal");
  const std::size_t out_len = band_length(signal.size());
  approx.assign(out_len, 0.0);
  detail.assign(out_len, 0.0);
  for (std::size_t o = 0; o < out_len; ++o) {
    const auto base = static_cast<std::ptrdiff_t>(2 * o + 1);
    double a = 0.0, d = 0.0;
    for (std::size_t j = 0; j < kFilterLength; ++j) {
      const double v = extended(signal, base - static_cast<std::ptrdiff_t>(j), mode);
      a += kDb4Lowpass[j] * v;
      d += kDb4Highpass[j] * v;
    }
    approx[o] = a;
    detail[o] = d;
  }
}

std::vector<double> idwt(std::span<const double> approx, std::span<const double> detail, Mode /*mode*/,
                         std::size_t length) {
  if (approx.size() != detail.size())
    throw Error(ErrorKind::DimensionMismatch, "approximation and detail bands differ in length");
  if (band_length(length) != approx.size())
    throw Error(ErrorKind::DimensionMismatch, "band length " + std::to_string(approx.size()) +
                                                  " does not match signal length " + std::to_string(length));
  // Transpose of the analysis step restricted to the signal support. Every
  // coefficient touching x[k] was computed from the true extension, so the
  // orthogonal filter bank reconstructs exactly for any extension mode.
  std::vector<double> out(length, 0.0);
  const auto nc = static_cast<std::ptrdiff_t>(approx.size());
  for (std::size_t k = 0; k < length; ++k) {
    const auto kk = static_cast<std::ptrdiff_t>(k);
    // taps j = 2o + 1 - k in [0, F-1]
    std::ptrdiff_t o_lo = (kk) / 2;  // ceil((k - 1) / 2)
    if (kk == 0) o_lo = 0;
    const std::ptrdiff_t o_hi = (kk + static_cast<std::ptrdiff_t>(kFilterLength) - 2) / 2;
    double s = 0.0;
    for (std::ptrdiff_t o = o_lo; o <= o_hi && o < nc; ++o) {
      const std::ptrdiff_t j = 2 * o + 1 - kk;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(kFilterLength)) continue;
      s += kDb4Lowpass[static_cast<std::size_t>(j)] * approx[static_cast<std::size_t>(o)] +
           kDb4Highpass[static_cast<std::size_t>(j)] * detail[static_cast<std::size_t>(o)];
    }
    out[k] = s;
  }
  return out;
}

std::size_t coefficient_count(std::size_t n, std::size_t levels) {
  std::size_t total = 0, len = n;
  for (std::size_t l = 0; l < levels; ++l) {
    len = band_length(len);
    total += len;
  }
  return total + len;
}

Decomposition wavedec(std::span<const double> signal, std::size_t levels, Mode mode) {
  if (levels < 1) throw Error(ErrorKind::TooShortForLevels, "need at least one decomposition level");
  if (levels > max_level(signal.size()))
    throw Error(ErrorKind::TooShortForLevels, "signal of length " + std::to_string(signal.size()) + " admits at most " +
                                                  std::to_string(max_level(signal.size())) + " db4 levels, requested " +
                                                  std::to_string(levels));
  Decomposition dec;
  std::vector<double> current(signal.begin(), signal.end());
  std::vector<std::vector<double>> details;
  for (std::size_t l = 0; l < levels; ++l) {
    dec.signal_lengths.push_back(current.size());
    std::vector<double> a, d;
    dwt(current, mode, a, d);
    details.push_back(std::move(d));
    current = std::move(a);
  }
  dec.bands.push_back(std::move(current));
  for (auto it = details.rbegin(); it != details.rend(); ++it) dec.bands.push_back(std::move(*it));
  return dec;
}

std::vector<double> waverec(const Decomposition& dec, Mode mode) {
  const std::size_t levels = dec.signal_lengths.size();
  if (dec.bands.size() != levels + 1)
    throw Error(ErrorKind::DimensionMismatch, "decomposition has inconsistent band count");
  std::vector<double> current = dec.bands.front();
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t level = levels - 1 - i;  // deepest first
    current = idwt(current, dec.bands[i + 1], mode, dec.signal_lengths[level]);
  }
  return current;
}

std::vector<double> flatten(const Decomposition& dec) {
  std::vector<double> out;
  for (const auto& b : dec.bands) out.insert(out.end(), b.begin(), b.end());
  return out;
}

Decomposition unflatten(std::span<const double> coeffs, std::size_t n, std::size_t levels) {
  if (coeffs.size() != coefficient_count(n, levels))
    throw Error(ErrorKind::DimensionMismatch, "coefficient vector has wrong length");
  Decomposition dec;
  std::vector<std::size_t> band_sizes;
  std::size_t len = n;
  for (std::size_t l = 0; l < levels; ++l) {
    dec.signal_lengths.push_back(len);
    len = band_length(len);
    band_sizes.push_back(len);
  }
  std::size_t pos = 0;
  auto take = [&](std::size_t count) {
    std::vector<double> b(coeffs.begin() + static_cast<std::ptrdiff_t>(pos),
                          coeffs.begin() + static_cast<std::ptrdiff_t>(pos + count));
    pos += count;
    return b;
  };
  dec.bands.push_back(take(band_sizes.back()));
  for (std::size_t i = levels; i-- > 0;) dec.bands.push_back(take(band_sizes[i]));
  return dec;
}

}  // namespace dispersion::wavelet
