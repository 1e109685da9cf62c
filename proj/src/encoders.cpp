#include "dispersion/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <mutex>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "dispersion/binary_io.hpp"
#include "dispersion/error.hpp"

namespace dispersion {

namespace {

constexpr char kFeatureMagic[4] = {'D', 'S', 'P', 'X'};
constexpr std::uint32_t kFeatureVersion = 1;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// r2c plan shared by all rows of one encode call. Execution on fresh
/// fftw_alloc'd buffers is thread-safe; planning is not.
class RealFftPlan {
 public:
  explicit RealFftPlan(std::size_t n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    if (plan_ == nullptr) throw Error(ErrorKind::InvalidConfig, "FFTW could not plan a length-" + std::to_string(n) + " transform");
  }
  ~RealFftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  void magnitudes(std::span<const double> signal, std::span<double> out) const {
    std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(n_), &fftw_free);
    std::unique_ptr<fftw_complex, decltype(&fftw_free)> spec(fftw_alloc_complex(n_ / 2 + 1), &fftw_free);
    std::copy(signal.begin(), signal.end(), in.get());
    fftw_execute_dft_r2c(plan_, in.get(), spec.get());
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = std::hypot(spec.get()[k][0], spec.get()[k][1]);
  }

 private:
  std::size_t n_;
  fftw_plan plan_ = nullptr;
};

FeatureMatrix make_matrix(const TrajectorySet& ts, EncodingKind kind, Axis axis, std::size_t dim) {
  if (ts.node_count() == 0 || ts.run_count() == 0) throw Error(ErrorKind::EmptyDataset, "nothing to encode");
  FeatureMatrix fm;
  fm.kind = kind;
  fm.axis = axis;
  fm.dim = dim;
  fm.samples.reserve(ts.node_count() * ts.run_count());
  for (std::size_t i = 0; i < ts.node_count(); ++i)
    for (std::size_t r = 0; r < ts.run_count(); ++r)
      fm.samples.push_back({ts.node_ids()[i], static_cast<std::uint32_t>(r)});
  fm.values.assign(fm.samples.size() * dim, 0.0);
  return fm;
}

void axis_displacement(const TrajectorySet& ts, std::size_t node, std::size_t run, Axis axis, std::span<double> out) {
  const double origin = ts.at(node, run, 0, axis);
  for (std::size_t t = 0; t < ts.timestep_count(); ++t) out[t] = ts.at(node, run, t, axis) - origin;
}

}  // namespace

EncodingKind parse_encoding(const std::string& text) {
  if (text == "displacement" || text == "position") return EncodingKind::Displacement;
  if (text == "fourier") return EncodingKind::Fourier;
  if (text == "wavelet") return EncodingKind::Wavelet;
  if (text == "slope") return EncodingKind::Slope;
  throw Error(ErrorKind::InvalidConfig, "unknown encoding '" + text + "'");
}

const char* to_string(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::Displacement: return "displacement";
    case EncodingKind::Fourier: return "fourier";
    case EncodingKind::Wavelet: return "wavelet";
    case EncodingKind::Slope: return "slope";
  }
  return "?";
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.kind = kind;
  out.axis = axis;
  out.dim = dim;
  out.wavelet_levels = wavelet_levels;
  out.wavelet_mode = wavelet_mode;
  out.scaling = scaling;
  out.samples.reserve(rows.size());
  out.values.reserve(rows.size() * dim);
  for (auto r : rows) {
    if (r >= this->rows()) throw Error(ErrorKind::OutOfRange, "row " + std::to_string(r) + " out of range");
    out.samples.push_back(samples[r]);
    const auto src = row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_for_runs(std::span<const std::uint32_t> runs) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (std::find(runs.begin(), runs.end(), samples[i].run) != runs.end()) out.push_back(i);
  return out;
}

void FeatureMatrix::validate() const {
  if (values.size() != samples.size() * dim) throw Error(ErrorKind::DimensionMismatch, "feature matrix shape is inconsistent");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw Error(ErrorKind::NonFiniteValue, "feature row " + std::to_string(i / std::max<std::size_t>(dim, 1)) +
                                                 " column " + std::to_string(i % std::max<std::size_t>(dim, 1)));
  if (scaling && (scaling->mean.size() != dim || scaling->stddev.size() != dim))
    throw Error(ErrorKind::DimensionMismatch, "scaling statistics do not match feature dimension");
}

std::size_t default_wavelet_levels(std::size_t timesteps) { return std::max<std::size_t>(1, wavelet::max_level(timesteps)); }

FeatureMatrix encode_displacement(const TrajectorySet& ts, Execution exec) {
  const std::size_t steps = ts.timestep_count();
  auto fm = make_matrix(ts, EncodingKind::Displacement, Axis::X, 3 * steps);
  const std::size_t runs = ts.run_count();
  for_each_index(exec, fm.rows(), [&](std::size_t row) {
    const std::size_t node = row / runs, run = row % runs;
    auto out = fm.row(row);
    // [x(0..T-1) - x(0), y(...) - y(0), z(...) - z(0)]
    for (std::size_t a = 0; a < 3; ++a) axis_displacement(ts, node, run, static_cast<Axis>(a), out.subspan(a * steps, steps));
  });
  return fm;
}

std::vector<double> magnitude_spectrum(std::span<const double> signal) {
  if (signal.size() < 2) throw Error(ErrorKind::OutOfRange, "spectrum needs at least 2 samples");
  RealFftPlan plan(signal.size());
  std::vector<double> out(signal.size() / 2 + 1);
  plan.magnitudes(signal, out);
  return out;
}

FeatureMatrix encode_fourier(const TrajectorySet& ts, Axis axis, Execution exec) {
  const std::size_t steps = ts.timestep_count();
  if (steps < 2) throw Error(ErrorKind::OutOfRange, "Fourier encoding needs at least 2 timesteps");
  auto fm = make_matrix(ts, EncodingKind::Fourier, axis, steps / 2 + 1);
  const RealFftPlan plan(steps);
  const std::size_t runs = ts.run_count();
  for_each_index(exec, fm.rows(), [&](std::size_t row) {
    std::vector<double> signal(steps);
    axis_displacement(ts, row / runs, row % runs, axis, signal);
    plan.magnitudes(signal, fm.row(row));
  });
  return fm;
}

FeatureMatrix encode_wavelet(const TrajectorySet& ts, Axis axis, WaveletConfig cfg, Execution exec) {
  const std::size_t steps = ts.timestep_count();
  const std::size_t levels = cfg.levels == 0 ? default_wavelet_levels(steps) : cfg.levels;
  if (levels > wavelet::max_level(steps))
    throw Error(ErrorKind::TooShortForLevels, std::to_string(steps) + " timesteps admit at most " +
                                                  std::to_string(wavelet::max_level(steps)) + " db4 levels, requested " +
                                                  std::to_string(levels));
  auto fm = make_matrix(ts, EncodingKind::Wavelet, axis, wavelet::coefficient_count(steps, levels));
  fm.wavelet_levels = levels;
  fm.wavelet_mode = cfg.mode;
  const std::size_t runs = ts.run_count();
  for_each_index(exec, fm.rows(), [&](std::size_t row) {
    std::vector<double> signal(steps);
    axis_displacement(ts, row / runs, row % runs, axis, signal);
    const auto coeffs = wavelet::flatten(wavelet::wavedec(signal, levels, cfg.mode));
    std::copy(coeffs.begin(), coeffs.end(), fm.row(row).begin());
  });
  return fm;
}

FeatureMatrix encode_slope(const TrajectorySet& ts, Axis axis, Execution exec) {
  const std::size_t steps = ts.timestep_count();
  if (steps < 2) throw Error(ErrorKind::OutOfRange, "slope encoding needs at least 2 timesteps");
  const auto& time = ts.time_ms();
  for (std::size_t i = 0; i + 1 < steps; ++i)
    if (!(time[i + 1] - time[i] != 0.0))
      throw Error(ErrorKind::ZeroTimeIncrement, "zero time increment between timesteps " + std::to_string(i) + " and " +
                                                    std::to_string(i + 1));
  auto fm = make_matrix(ts, EncodingKind::Slope, axis, steps - 1);
  const std::size_t runs = ts.run_count();
  for_each_index(exec, fm.rows(), [&](std::size_t row) {
    const std::size_t node = row / runs, run = row % runs;
    auto out = fm.row(row);
    for (std::size_t i = 0; i + 1 < steps; ++i)
      out[i] = (ts.at(node, run, i + 1, axis) - ts.at(node, run, i, axis)) / (time[i + 1] - time[i]);
  });
  return fm;
}

std::vector<std::uint64_t> pair_crossings(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "crossing signals differ in length");
  std::vector<std::uint64_t> cumulative(a.size(), 0);
  int last_sign = 0;
  std::uint64_t count = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double delta = a[t] - b[t];
    const int sign = (delta > 0.0) - (delta < 0.0);
    if (sign != 0) {
      if (t > 0 && last_sign != 0 && sign != last_sign) ++count;
      last_sign = sign;
    }
    cumulative[t] = count;
  }
  return cumulative;
}

std::vector<std::uint64_t> count_crossings(const TrajectorySet& ts, std::int64_t node_id, Axis axis) {
  if (ts.run_count() < 2) throw Error(ErrorKind::SingleRun, "crossings need at least two runs");
  const auto node = ts.find_node(node_id);
  if (node < 0) throw Error(ErrorKind::MismatchedNodeSet, "node " + std::to_string(node_id) + " is not in the dataset");
  const std::size_t steps = ts.timestep_count();
  std::vector<std::vector<double>> signals(ts.run_count(), std::vector<double>(steps));
  for (std::size_t r = 0; r < ts.run_count(); ++r)
    for (std::size_t t = 0; t < steps; ++t) signals[r][t] = ts.at(static_cast<std::size_t>(node), r, t, axis);
  std::vector<std::uint64_t> total(steps, 0);
  for (std::size_t i = 0; i < ts.run_count(); ++i)
    for (std::size_t j = i + 1; j < ts.run_count(); ++j) {
      const auto c = pair_crossings(signals[i], signals[j]);
      for (std::size_t t = 0; t < steps; ++t) total[t] += c[t];
    }
  return total;
}

FeatureMatrix normalize_features(const FeatureMatrix& fm, const std::optional<FeatureStats>& stats) {
  FeatureStats s;
  if (stats) {
    if (stats->mean.size() != fm.dim || stats->stddev.size() != fm.dim)
      throw Error(ErrorKind::DimensionMismatch, "statistics have dimension " + std::to_string(stats->mean.size()) +
                                                    ", features have " + std::to_string(fm.dim));
    s = *stats;
  } else {
    if (fm.rows() == 0) throw Error(ErrorKind::TooFewSamples, "cannot compute statistics of an empty matrix");
    s.mean.assign(fm.dim, 0.0);
    s.stddev.assign(fm.dim, 0.0);
    for (std::size_t i = 0; i < fm.rows(); ++i) {
      const auto r = fm.row(i);
      for (std::size_t c = 0; c < fm.dim; ++c) s.mean[c] += r[c];
    }
    for (auto& m : s.mean) m /= static_cast<double>(fm.rows());
    for (std::size_t i = 0; i < fm.rows(); ++i) {
      const auto r = fm.row(i);
      for (std::size_t c = 0; c < fm.dim; ++c) s.stddev[c] += (r[c] - s.mean[c]) * (r[c] - s.mean[c]);
    }
    for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(fm.rows()));
  }
  FeatureMatrix out = fm;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t c = 0; c < out.dim; ++c) r[c] = (r[c] - s.mean[c]) / std::max(s.stddev[c], kStdFloor);
  }
  out.scaling = std::move(s);
  return out;
}

void save_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
  fm.validate();
  io::BinaryWriter w(path.string());
  w.bytes(kFeatureMagic, 4);
  w.value<std::uint32_t>(kFeatureVersion);
  w.value<std::uint32_t>(static_cast<std::uint32_t>(fm.kind));
  w.value<std::uint32_t>(static_cast<std::uint32_t>(fm.axis));
  w.value<std::uint64_t>(fm.rows());
  w.value<std::uint64_t>(fm.dim);
  w.value<std::uint32_t>(static_cast<std::uint32_t>(fm.wavelet_levels));
  w.value<std::uint32_t>(static_cast<std::uint32_t>(fm.wavelet_mode));
  w.value<std::uint32_t>(fm.scaling ? 1u : 0u);
  for (const auto& s : fm.samples) {
    w.value<std::int64_t>(s.node_id);
    w.value<std::uint32_t>(s.run);
  }
  w.array<double>(fm.values);
  if (fm.scaling) {
    w.array<double>(fm.scaling->mean);
    w.array<double>(fm.scaling->stddev);
  }
  w.close();

  nlohmann::json meta = {
      {"format", "DSPX"},
      {"version", kFeatureVersion},
      {"encoding", to_string(fm.kind)},
      {"axis", to_string(fm.axis)},
      {"rows", fm.rows()},
      {"dim", fm.dim},
      {"normalized", fm.scaling.has_value()},
  };
  if (fm.kind == EncodingKind::Wavelet) {
    meta["wavelet"] = {{"family", "db4"}, {"levels", fm.wavelet_levels}, {"mode", wavelet::to_string(fm.wavelet_mode)}};
  }
  std::ofstream side(path.string() + ".json");
  if (!side) throw Error(ErrorKind::IoFailure, "cannot write feature sidecar for '" + path.string() + "'");
  side << meta.dump(2) << '\n';
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  io::BinaryReader r(path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kFeatureMagic))
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' is not a DSPX feature file");
  if (const auto v = r.value<std::uint32_t>(); v != kFeatureVersion)
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has feature format version " + std::to_string(v));
  FeatureMatrix fm;
  const auto kind = r.value<std::uint32_t>();
  const auto axis = r.value<std::uint32_t>();
  if (kind > 3 || axis > 2) throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has an unknown encoding tag");
  fm.kind = static_cast<EncodingKind>(kind);
  fm.axis = static_cast<Axis>(axis);
  const auto rows = r.value<std::uint64_t>();
  fm.dim = r.value<std::uint64_t>();
  fm.wavelet_levels = r.value<std::uint32_t>();
  const auto mode = r.value<std::uint32_t>();
  if (mode > 2) throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has an unknown wavelet mode");
  fm.wavelet_mode = static_cast<wavelet::Mode>(mode);
  const bool scaled = r.value<std::uint32_t>() != 0;
  fm.samples.resize(rows);
  for (auto& s : fm.samples) {
    s.node_id = r.value<std::int64_t>();
    s.run = r.value<std::uint32_t>();
  }
  fm.values = r.array<double>(rows * fm.dim);
  if (scaled) {
    FeatureStats s;
    s.mean = r.array<double>(fm.dim);
    s.stddev = r.array<double>(fm.dim);
    fm.scaling = std::move(s);
  }
  fm.validate();
  return fm;
}

}  // namespace dispersion
