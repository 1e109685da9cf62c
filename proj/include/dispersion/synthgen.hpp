#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dispersion/dataset.hpp"
#include "dispersion/execution.hpp"

namespace dispersion {

/// Synthetic multi-run crash-like trajectories with planted dispersion.
///
/// Every node follows a smooth compression ramp peaking at `peak_timestep`
/// followed by partial springback, plus bounded smooth per-run noise.
/// Dispersed nodes add a bistable branch along x: each run draws a
/// perturbation of size ~`perturbation_mm`, amplified by `divergence_rate`
/// per step after the node's onset and saturating at +-B (B drawn from
/// [branch_min_mm, branch_max_mm]), so runs separate monotonically.
struct SynthConfig {
  std::size_t n_nodes = 2000;
  std::size_t n_runs = 10;
  std::size_t timesteps = 289;
  double dt_ms = 0.5;
  double dispersed_fraction = 0.5;
  double perturbation_mm = 1e-6;
  double divergence_rate = 1.25;
  std::size_t branch_onset = 120;
  std::size_t onset_jitter = 15;
  double branch_min_mm = 8.0;
  double branch_max_mm = 20.0;
  double noise_floor_mm = 0.1;
  std::size_t noise_modes = 4;
  std::size_t peak_timestep = 220;
  double threshold_mm = 5.0;
  std::size_t n_parts = 4;
  bool rigid_motion = false;
  std::array<double, 3> rigid_velocity_mm_per_ms = {-8.0, 0.5, 0.2};
  double rigid_yaw_rad_per_ms = 2e-4;
  double rigid_pitch_rad_per_ms = -1e-4;
  std::uint64_t seed = 42;

  /// Smallest guaranteed dispersed spread at the peak and largest possible
  /// non-dispersed spread, from the construction bounds.
  double min_dispersed_spread() const;
  double max_stable_spread() const;

  /// Throws InfeasibleConfig unless dispersed spread > 2 x threshold and
  /// stable spread < 0.5 x threshold are guaranteed.
  void validate() const;
};

struct SynthDataset {
  TrajectorySet trajectories;
  std::vector<int> dispersed;  // ground truth per node, in node order
};

SynthDataset generate(const SynthConfig& cfg, Execution exec = Execution::Parallel);

std::vector<SynthDataset> generate_suite(const SynthConfig& base, const std::vector<std::uint64_t>& seeds);

/// `node_id,part_id,dispersed`
void write_ground_truth(const SynthDataset& ds, const std::filesystem::path& path);

}  // namespace dispersion
