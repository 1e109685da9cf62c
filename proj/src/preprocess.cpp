#include "dispersion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dispersion/error.hpp"
#include "dispersion/linalg.hpp"
#include "dispersion/rng.hpp"

namespace dispersion {

void LabelingConfig::validate() const {
  if (!(threshold_mm > 0.0) || !std::isfinite(threshold_mm))
    throw Error(ErrorKind::InvalidConfig, "threshold_mm must be positive");
}

TrajectorySet remove_rigid_body_motion(const TrajectorySet& ts, Execution exec) {
  const std::size_t n = ts.node_count(), runs = ts.run_count(), steps = ts.timestep_count();
  Eigen::Matrix3Xd initial(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a) initial(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = ts.positions()[ts.offset(i, 0, 0, a)];
  linalg::require_non_degenerate(initial);

  TrajectorySet out = ts;
  for_each_index(exec, runs * steps, [&](std::size_t frame) {
    const std::size_t r = frame / steps, t = frame % steps;
    if (t == 0) return;  // the initial frame is the reference
    Eigen::Matrix3Xd current(3, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < 3; ++a)
        current(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = ts.positions()[ts.offset(i, r, t, a)];
    const auto fit = linalg::kabsch(initial, current);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d p = fit.apply_inverse(current.col(static_cast<Eigen::Index>(i)));
      for (std::size_t a = 0; a < 3; ++a) out.positions()[out.offset(i, r, t, a)] = p(static_cast<Eigen::Index>(a));
    }
  });
  return out;
}

std::size_t compute_peak_timestep(const TrajectorySet& ts, const LabelingConfig& cfg) {
  const std::size_t steps = ts.timestep_count();
  if (cfg.peak_rule == PeakRule::ExplicitTimestep) {
    if (cfg.explicit_timestep >= steps)
      throw Error(ErrorKind::OutOfRange, "peak timestep " + std::to_string(cfg.explicit_timestep) +
                                             " outside [0, " + std::to_string(steps) + ")");
    return cfg.explicit_timestep;
  }
  std::vector<double> total(steps, 0.0);
  for (std::size_t i = 0; i < ts.node_count(); ++i)
    for (std::size_t r = 0; r < ts.run_count(); ++r) {
      const double origin = ts.at(i, r, 0, cfg.axis);
      for (std::size_t t = 0; t < steps; ++t) total[t] += std::abs(ts.at(i, r, t, cfg.axis) - origin);
    }
  // argmax of the sum equals argmax of the mean; ties resolve to the earliest step
  return static_cast<std::size_t>(std::distance(total.begin(), std::max_element(total.begin(), total.end())));
}

std::vector<DispersionLabel> label_dispersion(const TrajectorySet& ts, const LabelingConfig& cfg) {
  cfg.validate();
  if (ts.run_count() < 2)
    throw Error(ErrorKind::SingleRun, "dispersion needs at least two runs, got " + std::to_string(ts.run_count()));
  const std::size_t peak = compute_peak_timestep(ts, cfg);
  std::vector<DispersionLabel> labels(ts.node_count());
  for (std::size_t i = 0; i < ts.node_count(); ++i) {
    double lo = ts.at(i, 0, peak, cfg.axis), hi = lo;
    for (std::size_t r = 1; r < ts.run_count(); ++r) {
      const double v = ts.at(i, r, peak, cfg.axis);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    auto& l = labels[i];
    l.node_id = ts.node_ids()[i];
    l.spread_mm = hi - lo;
    l.y = l.spread_mm > cfg.threshold_mm ? 1 : 0;
    l.peak_timestep = peak;
  }
  return labels;
}

std::vector<std::int64_t> balance_classes(std::span<const DispersionLabel> labels, std::uint64_t seed) {
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].y != 0 && labels[i].y != 1)
      throw Error(ErrorKind::NonBinaryLabel, "label for node " + std::to_string(labels[i].node_id) + " is not 0/1");
    cls[labels[i].y].push_back(i);
  }
  if (cls[0].empty() || cls[1].empty())
    throw Error(ErrorKind::EmptyClass, "balancing needs both classes (dispersed=" + std::to_string(cls[1].size()) +
                                           ", non-dispersed=" + std::to_string(cls[0].size()) + ")");
  const int majority = cls[1].size() > cls[0].size() ? 1 : 0;
  auto& major = cls[majority];
  const std::size_t keep = cls[1 - majority].size();
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(major));
  major.resize(keep);

  std::vector<std::size_t> selected = cls[0];
  selected.insert(selected.end(), cls[1].begin(), cls[1].end());
  std::sort(selected.begin(), selected.end());
  std::vector<std::int64_t> ids;
  ids.reserve(selected.size());
  for (auto i : selected) ids.push_back(labels[i].node_id);
  return ids;
}

namespace {

TrajectorySet subset(const TrajectorySet& ts, const std::vector<std::size_t>& rows) {
  std::vector<std::int64_t> node_ids, part_ids;
  for (auto i : rows) {
    node_ids.push_back(ts.node_ids()[i]);
    part_ids.push_back(ts.part_ids()[i]);
  }
  TrajectorySet out(std::move(node_ids), std::move(part_ids), ts.run_count(), ts.time_ms());
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t r = 0; r < ts.run_count(); ++r) {
      const auto src = ts.trajectory(rows[k], r);
      std::copy(src.begin(), src.end(), out.trajectory(k, r).begin());
    }
  return out;
}

}  // namespace

TrajectorySet filter_parts(const TrajectorySet& ts, std::span<const std::int64_t> excluded_parts) {
  const std::set<std::int64_t> known(ts.part_ids().begin(), ts.part_ids().end());
  for (auto p : excluded_parts)
    if (!known.count(p)) throw Error(ErrorKind::UnknownPartId, "part " + std::to_string(p) + " is not in the dataset");
  const std::set<std::int64_t> excluded(excluded_parts.begin(), excluded_parts.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ts.node_count(); ++i)
    if (!excluded.count(ts.part_ids()[i])) rows.push_back(i);
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "every node belongs to an excluded part");
  return subset(ts, rows);
}

TrajectorySet select_nodes(const TrajectorySet& ts, std::span<const std::int64_t> node_ids) {
  std::vector<std::size_t> rows;
  rows.reserve(node_ids.size());
  for (auto id : node_ids) {
    const auto i = ts.find_node(id);
    if (i < 0) throw Error(ErrorKind::MismatchedNodeSet, "node " + std::to_string(id) + " is not in the dataset");
    rows.push_back(static_cast<std::size_t>(i));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no nodes selected");
  return subset(ts, rows);
}

TrajectorySet truncate_timesteps(const TrajectorySet& ts, std::size_t t_max) {
  if (t_max < 2 || t_max > ts.timestep_count())
    throw Error(ErrorKind::OutOfRange, "truncation length " + std::to_string(t_max) + " outside [2, " +
                                           std::to_string(ts.timestep_count()) + "]");
  std::vector<double> time(ts.time_ms().begin(), ts.time_ms().begin() + static_cast<std::ptrdiff_t>(t_max));
  TrajectorySet out(ts.node_ids(), ts.part_ids(), ts.run_count(), std::move(time));
  for (std::size_t i = 0; i < ts.node_count(); ++i)
    for (std::size_t r = 0; r < ts.run_count(); ++r) {
      const auto src = ts.trajectory(i, r);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(t_max * 3), out.trajectory(i, r).begin());
    }
  return out;
}

}  // namespace dispersion
