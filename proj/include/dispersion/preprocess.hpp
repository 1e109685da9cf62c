#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dispersion/dataset.hpp"
#include "dispersion/execution.hpp"

namespace dispersion {

enum class PeakRule { ExplicitTimestep, MaxMeanAbsDisplacement };

struct LabelingConfig {
  double threshold_mm = 5.0;
  Axis axis = Axis::X;
  PeakRule peak_rule = PeakRule::MaxMeanAbsDisplacement;
  std::size_t explicit_timestep = 0;  // used when peak_rule == ExplicitTimestep

  void validate() const;
};

/// y == 1 iff spread_mm > threshold (strict).
struct DispersionLabel {
  std::int64_t node_id = 0;
  int y = 0;
  double spread_mm = 0.0;
  std::size_t peak_timestep = 0;

  bool operator==(const DispersionLabel&) const = default;
};

/// Per (run, timestep), fits the rigid transform carrying the initial cloud
/// onto the current cloud (over all nodes) and removes it, leaving the
/// deformation relative to the initial frame.
TrajectorySet remove_rigid_body_motion(const TrajectorySet& ts, Execution exec = Execution::Parallel);

std::size_t compute_peak_timestep(const TrajectorySet& ts, const LabelingConfig& cfg);

std::vector<DispersionLabel> label_dispersion(const TrajectorySet& ts, const LabelingConfig& cfg);

/// Keeps every minority-class node plus a seeded uniform subsample of the
/// majority class of equal size. Returned ids follow the input label order.
std::vector<std::int64_t> balance_classes(std::span<const DispersionLabel> labels, std::uint64_t seed);

TrajectorySet filter_parts(const TrajectorySet& ts, std::span<const std::int64_t> excluded_parts);

/// Keeps the given nodes (by id), in the order given.
TrajectorySet select_nodes(const TrajectorySet& ts, std::span<const std::int64_t> node_ids);

/// Keeps timesteps [0, t_max).
TrajectorySet truncate_timesteps(const TrajectorySet& ts, std::size_t t_max);

}  // namespace dispersion
