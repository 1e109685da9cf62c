#include "dispersion/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "dispersion/error.hpp"
#include "dispersion/rng.hpp"

namespace dispersion {

namespace {

constexpr double kVehicleLength = 4000.0;
constexpr double kVehicleWidth = 1800.0;
constexpr double kVehicleHeight = 1400.0;

/// Compression ramp reaching 1 at the peak with a nonzero slope (a kink),
/// then linear springback.
double compression_profile(std::size_t t, std::size_t peak, std::size_t last, double exponent, double springback) {
  if (t <= peak) return std::pow(static_cast<double>(t) / static_cast<double>(peak), exponent);
  return 1.0 - springback * static_cast<double>(t - peak) / static_cast<double>(std::max<std::size_t>(1, last - peak));
}

/// Bistable branch: exponential growth of the perturbation from the onset,
/// saturating at +-amplitude, shifted to vanish at t = 0.
double branch(double perturbation, double rate, double t, double onset, double amplitude) {
  auto raw = [&](double s) { return amplitude * std::tanh(perturbation * std::pow(rate, s - onset) / amplitude); };
  return raw(t) - raw(0.0);
}

}  // namespace

double SynthConfig::min_dispersed_spread() const {
  const double latest_onset = static_cast<double>(branch_onset + onset_jitter);
  const double gain = std::pow(divergence_rate, static_cast<double>(peak_timestep) - latest_onset);
  const double smallest = branch_min_mm * std::tanh(0.5 * perturbation_mm * gain / branch_min_mm);
  // opposite branches are guaranteed; the t = 0 shift is bounded by the raw perturbation
  return 2.0 * (smallest - perturbation_mm) - 2.0 * noise_floor_mm;
}

double SynthConfig::max_stable_spread() const { return 2.0 * noise_floor_mm; }

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InfeasibleConfig, why); };
  if (n_nodes < 3) fail("need at least 3 nodes");
  if (n_runs < 2) fail("need at least 2 runs");
  if (timesteps < 3) fail("need at least 3 timesteps");
  if (!(dt_ms > 0.0)) fail("dt must be positive");
  if (!(dispersed_fraction > 0.0 && dispersed_fraction < 1.0)) fail("dispersed_fraction must lie in (0, 1)");
  if (peak_timestep < 1 || peak_timestep >= timesteps) fail("peak timestep outside the time grid");
  if (branch_onset + onset_jitter >= peak_timestep) fail("branch onset must precede the peak");
  if (onset_jitter > branch_onset) fail("onset jitter exceeds the onset step");
  if (!(branch_min_mm > 0.0) || branch_max_mm < branch_min_mm) fail("branch amplitude range is invalid");
  if (!(divergence_rate > 1.0)) fail("divergence rate must exceed 1");
  if (!(noise_floor_mm >= 0.0) || noise_modes < 1) fail("noise settings are invalid");
  if (n_parts < 1) fail("need at least one part");
  if (!(perturbation_mm > 0.0)) fail("perturbation scale is zero: no node can disperse");
  const std::size_t planted = static_cast<std::size_t>(std::llround(dispersed_fraction * static_cast<double>(n_nodes)));
  if (planted == 0 || planted == n_nodes) fail("dispersed fraction leaves one class empty");
  if (!(min_dispersed_spread() > 2.0 * threshold_mm))
    fail("guaranteed dispersed spread " + std::to_string(min_dispersed_spread()) + " mm does not exceed twice the threshold");
  if (!(max_stable_spread() < 0.5 * threshold_mm))
    fail("stable spread bound " + std::to_string(max_stable_spread()) + " mm is not below half the threshold");
}

SynthDataset generate(const SynthConfig& cfg, Execution exec) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes, runs = cfg.n_runs, steps = cfg.timesteps;

  std::vector<std::int64_t> node_ids(n), part_ids(n);
  std::vector<std::array<double, 3>> initial(n);
  {
    Rng layout(derive_seed(cfg.seed, 0xA11));
    for (std::size_t i = 0; i < n; ++i) {
      node_ids[i] = static_cast<std::int64_t>(i + 1);
      initial[i] = {layout.uniform(0.0, kVehicleLength), layout.uniform(-0.5 * kVehicleWidth, 0.5 * kVehicleWidth),
                    layout.uniform(0.0, kVehicleHeight)};
      const auto band = static_cast<std::size_t>(initial[i][0] / kVehicleLength * static_cast<double>(cfg.n_parts));
      part_ids[i] = static_cast<std::int64_t>(std::min(band, cfg.n_parts - 1) + 1);
    }
  }

  SynthDataset out;
  out.dispersed.assign(n, 0);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng pick(derive_seed(cfg.seed, 0xD15));
    pick.shuffle(std::span<std::size_t>(order));
    const auto planted = static_cast<std::size_t>(std::llround(cfg.dispersed_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < planted; ++i) out.dispersed[order[i]] = 1;
  }

  std::vector<double> time(steps);
  for (std::size_t t = 0; t < steps; ++t) time[t] = cfg.dt_ms * static_cast<double>(t);
  TrajectorySet ts(node_ids, part_ids, runs, time);

  std::vector<Eigen::Matrix3d> rotation(steps, Eigen::Matrix3d::Identity());
  std::vector<Eigen::Vector3d> translation(steps, Eigen::Vector3d::Zero());
  if (cfg.rigid_motion) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double yaw = cfg.rigid_yaw_rad_per_ms * time[t];
      const double pitch = cfg.rigid_pitch_rad_per_ms * time[t];
      rotation[t] = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()))
                        .toRotationMatrix();
      translation[t] = Eigen::Vector3d(cfg.rigid_velocity_mm_per_ms[0], cfg.rigid_velocity_mm_per_ms[1],
                                       cfg.rigid_velocity_mm_per_ms[2]) * time[t];
    }
  }

  const std::size_t last = steps - 1;
  for_each_index(exec, n, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, 0x1000 + i));
    const double amplitude_x = rng.uniform(40.0, 120.0);
    const double amplitude_y = rng.uniform(-20.0, 20.0);
    const double amplitude_z = rng.uniform(-15.0, 15.0);
    const double exponent = rng.uniform(1.2, 2.5);
    const double springback = rng.uniform(0.1, 0.3);
    const double onset = static_cast<double>(cfg.branch_onset) +
                         static_cast<double>(rng.index(2 * cfg.onset_jitter + 1)) - static_cast<double>(cfg.onset_jitter);
    const double saturation = rng.uniform(cfg.branch_min_mm, cfg.branch_max_mm);

    std::vector<double> perturbation(runs, 0.0);
    if (out.dispersed[i]) {
      bool positive = false, negative = false;
      for (auto& p : perturbation) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        p = sign * cfg.perturbation_mm * rng.uniform(0.5, 1.0);
        (sign > 0 ? positive : negative) = true;
      }
      // bistability needs both branches populated
      if (!positive || !negative) {
        const auto flip = static_cast<std::size_t>(rng.index(runs));
        perturbation[flip] = -perturbation[flip];
      }
    }

    for (std::size_t r = 0; r < runs; ++r) {
      std::array<std::vector<double>, 3> noise_coeff;
      for (auto& c : noise_coeff) {
        c.resize(cfg.noise_modes);
        for (auto& v : c) v = rng.uniform(-1.0, 1.0) * cfg.noise_floor_mm / static_cast<double>(cfg.noise_modes);
      }
      for (std::size_t t = 0; t < steps; ++t) {
        const double shape = compression_profile(t, cfg.peak_timestep, last, exponent, springback);
        std::array<double, 3> d = {-amplitude_x * shape, amplitude_y * shape, amplitude_z * shape};
        for (std::size_t a = 0; a < 3; ++a) {
          double noise = 0.0;
          for (std::size_t k = 0; k < cfg.noise_modes; ++k)
            noise += noise_coeff[a][k] * std::sin(M_PI * static_cast<double>(k + 1) * static_cast<double>(t) / static_cast<double>(last));
          d[a] += noise;
        }
        if (out.dispersed[i]) d[0] += branch(perturbation[r], cfg.divergence_rate, static_cast<double>(t), onset, saturation);

        Eigen::Vector3d p(initial[i][0] + d[0], initial[i][1] + d[1], initial[i][2] + d[2]);
        if (t == 0) p = Eigen::Vector3d(initial[i][0], initial[i][1], initial[i][2]);
        else if (cfg.rigid_motion) p = rotation[t] * p + translation[t];
        for (std::size_t a = 0; a < 3; ++a) ts.positions()[ts.offset(i, r, t, a)] = p(static_cast<Eigen::Index>(a));
      }
    }
  });
  ts.validate();
  out.trajectories = std::move(ts);
  return out;
}

std::vector<SynthDataset> generate_suite(const SynthConfig& base, const std::vector<std::uint64_t>& seeds) {
  std::vector<SynthDataset> suite;
  suite.reserve(seeds.size());
  for (auto s : seeds) {
    SynthConfig cfg = base;
    cfg.seed = s;
    suite.push_back(generate(cfg));
  }
  return suite;
}

void write_ground_truth(const SynthDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
  out << "node_id,part_id,dispersed\n";
  const auto& ts = ds.trajectories;
  for (std::size_t i = 0; i < ts.node_count(); ++i)
    out << ts.node_ids()[i] << ',' << ts.part_ids()[i] << ',' << ds.dispersed[i] << '\n';
}

}  // namespace dispersion
