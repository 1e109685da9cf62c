#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "dispersion/preprocess.hpp"
#include "dispersion/rng.hpp"
#include "support.hpp"

using namespace dispersion;
using testing::error_kind;
using testing::resting_set;

namespace {

Eigen::Matrix3d rotation_at(std::size_t t) {
  const double s = static_cast<double>(t);
  return (Eigen::AngleAxisd(0.03 * s, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(-0.02 * s, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(0.01 * s, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d translation_at(std::size_t t, std::size_t run) {
  const double s = static_cast<double>(t);
  return {-8.0 * s + 0.1 * static_cast<double>(run), 0.5 * s, 0.2 * s * s};
}

Eigen::Vector3d point(const TrajectorySet& ts, std::size_t i, std::size_t r, std::size_t t) {
  return {ts.at(i, r, t, Axis::X), ts.at(i, r, t, Axis::Y), ts.at(i, r, t, Axis::Z)};
}

void set_point(TrajectorySet& ts, std::size_t i, std::size_t r, std::size_t t, const Eigen::Vector3d& p) {
  ts.at(i, r, t, Axis::X) = p.x();
  ts.at(i, r, t, Axis::Y) = p.y();
  ts.at(i, r, t, Axis::Z) = p.z();
}

/// Composes a per-frame rigid motion on top of every frame after the first.
TrajectorySet with_rigid_motion(const TrajectorySet& ts) {
  auto out = ts;
  for (std::size_t r = 0; r < ts.run_count(); ++r)
    for (std::size_t t = 1; t < ts.timestep_count(); ++t)
      for (std::size_t i = 0; i < ts.node_count(); ++i)
        set_point(out, i, r, t, rotation_at(t) * point(ts, i, r, t) + translation_at(t, r));
  return out;
}

double max_abs_difference(const TrajectorySet& a, const TrajectorySet& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.positions().size(); ++k)
    worst = std::max(worst, std::abs(a.positions()[k] - b.positions()[k]));
  return worst;
}

/// Set with x values at timestep `peak` given per run for one node.
TrajectorySet peak_values(const std::vector<double>& x_at_peak, std::size_t peak = 2) {
  auto ts = resting_set(1, x_at_peak.size(), peak + 2);
  for (std::size_t r = 0; r < x_at_peak.size(); ++r) ts.at(0, r, peak, Axis::X) = x_at_peak[r];
  return ts;
}

LabelingConfig explicit_peak(std::size_t peak) {
  LabelingConfig cfg;
  cfg.peak_rule = PeakRule::ExplicitTimestep;
  cfg.explicit_timestep = peak;
  return cfg;
}

std::vector<DispersionLabel> labels_with(std::size_t dispersed, std::size_t stable) {
  std::vector<DispersionLabel> labels(dispersed + stable);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i].node_id = static_cast<std::int64_t>(100 + 3 * i);
    // interleave the classes
    labels[i].y = (i * dispersed) / labels.size() != ((i + 1) * dispersed) / labels.size() ? 1 : 0;
  }
  return labels;
}

}  // namespace

TEST_CASE("pure rigid motion is removed exactly") {
  const auto rest = resting_set(12, 2, 9);
  const auto out = remove_rigid_body_motion(with_rigid_motion(rest));
  CHECK(max_abs_difference(out, rest) < 1e-9);
}

TEST_CASE("zero motion is left unchanged") {
  const auto rest = resting_set(12, 2, 6);
  CHECK(max_abs_difference(remove_rigid_body_motion(rest), rest) < 1e-12);
}

TEST_CASE("rigid motion over a known deformation field leaves the deformation") {
  // The deformation is projected to have zero mean and zero cross-covariance
  // with the centered initial cloud, so the best rigid fit of the deformed
  // cloud is the identity and the oracle is the construction itself.
  const std::size_t n = 15, runs = 2, steps = 7;
  auto deformed = resting_set(n, runs, steps);
  Eigen::Matrix3Xd initial(3, n);
  for (std::size_t i = 0; i < n; ++i) initial.col(static_cast<Eigen::Index>(i)) = point(deformed, i, 0, 0);
  Eigen::MatrixXd m(4, n);
  m.row(0).setOnes();
  m.bottomRows(3) = initial.colwise() - initial.rowwise().mean();
  const Eigen::MatrixXd projector =
      Eigen::MatrixXd::Identity(n, n) - m.transpose() * (m * m.transpose()).inverse() * m;
  Rng rng(5);
  for (std::size_t r = 0; r < runs; ++r)
    for (std::size_t t = 1; t < steps; ++t) {
      Eigen::MatrixXd d(3, n);
      for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] = rng.uniform(-2.0, 2.0);
      d = d * projector;
      for (std::size_t i = 0; i < n; ++i)
        set_point(deformed, i, r, t, initial.col(static_cast<Eigen::Index>(i)) + d.col(static_cast<Eigen::Index>(i)));
    }
  const auto out = remove_rigid_body_motion(with_rigid_motion(deformed));
  CHECK(max_abs_difference(out, deformed) < 1e-8);
}

TEST_CASE("rigid removal is idempotent") {
  auto ts = resting_set(10, 3, 8);
  Rng rng(11);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t t = 1; t < 8; ++t)
        for (auto a : {Axis::X, Axis::Y, Axis::Z}) ts.at(i, r, t, a) += rng.uniform(-3.0, 3.0);
  const auto once = remove_rigid_body_motion(with_rigid_motion(ts));
  const auto twice = remove_rigid_body_motion(once);
  CHECK(max_abs_difference(once, twice) < 1e-9);
}

TEST_CASE("collinear clouds are degenerate") {
  auto ts = resting_set(5, 2, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t t = 0; t < 3; ++t) {
        ts.at(i, r, t, Axis::Y) = 0.0;
        ts.at(i, r, t, Axis::Z) = 0.0;
      }
  CHECK(error_kind([&] { remove_rigid_body_motion(ts); }) == ErrorKind::DegenerateGeometry);
}

TEST_CASE("peak timestep") {
  SUBCASE("argmax of the displacement profile") {
    auto ts = resting_set(1, 1, 4);
    const double x0 = ts.at(0, 0, 0, Axis::X);
    const double profile[] = {0.0, -1.0, 3.0, 2.0};
    for (std::size_t t = 0; t < 4; ++t) ts.at(0, 0, t, Axis::X) = x0 + profile[t];
    CHECK(compute_peak_timestep(ts, LabelingConfig{}) == 2);
  }
  SUBCASE("explicit timestep") {
    const auto ts = resting_set(1, 2, 289);
    CHECK(compute_peak_timestep(ts, explicit_peak(220)) == 220);
    CHECK(error_kind([&] { compute_peak_timestep(ts, explicit_peak(289)); }) == ErrorKind::OutOfRange);
  }
  SUBCASE("ties resolve to the earliest step") {
    auto ts = resting_set(1, 1, 4);
    ts.at(0, 0, 1, Axis::X) += 2.0;
    ts.at(0, 0, 3, Axis::X) -= 2.0;
    CHECK(compute_peak_timestep(ts, LabelingConfig{}) == 1);
  }
}

TEST_CASE("labeling by range at the peak") {
  const auto six = label_dispersion(peak_values({100.0, 106.0}), explicit_peak(2));
  CHECK(six[0].spread_mm == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(six[0].y == 1);
  const auto four = label_dispersion(peak_values({100.0, 104.0}), explicit_peak(2));
  CHECK(four[0].spread_mm == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(four[0].y == 0);
  const auto five = label_dispersion(peak_values({100.0, 105.0}), explicit_peak(2));
  CHECK(five[0].spread_mm == 5.0);
  CHECK(five[0].y == 0);
  const auto many = label_dispersion(peak_values({3.0, -4.0, 1.5, 2.0}), explicit_peak(2));
  CHECK(many[0].spread_mm == 7.0);
  CHECK(many[0].peak_timestep == 2);
}

TEST_CASE("labeling needs two runs") {
  CHECK(error_kind([] { label_dispersion(resting_set(3, 1, 4), LabelingConfig{}); }) == ErrorKind::SingleRun);
}

TEST_CASE("labels are invariant under run permutation and constant offsets") {
  auto ts = resting_set(9, 4, 6);
  Rng rng(3);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t t = 1; t < 6; ++t) ts.at(i, r, t, Axis::X) -= static_cast<double>(t) * 4.0 + rng.uniform(0.0, 8.0);
  const auto base = label_dispersion(ts, LabelingConfig{});

  TrajectorySet permuted(ts.node_ids(), ts.part_ids(), 4, ts.time_ms());
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t r = 0; r < 4; ++r) {
      const auto src = ts.trajectory(i, order[r]);
      std::copy(src.begin(), src.end(), permuted.trajectory(i, r).begin());
    }
  CHECK(label_dispersion(permuted, LabelingConfig{}) == base);

  auto shifted = ts;
  for (std::size_t k = 0; k < shifted.positions().size(); ++k) shifted.positions()[k] += k % 3 == 0 ? 250.0 : -75.0;
  const auto moved = label_dispersion(shifted, LabelingConfig{});
  REQUIRE(moved.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(moved[i].y == base[i].y);
    CHECK(moved[i].spread_mm == doctest::Approx(base[i].spread_mm).epsilon(1e-12));
  }
}

TEST_CASE("class balancing") {
  auto count = [](const std::vector<DispersionLabel>& labels, const std::vector<std::int64_t>& ids) {
    std::size_t dispersed = 0;
    for (auto id : ids)
      for (const auto& l : labels)
        if (l.node_id == id) dispersed += static_cast<std::size_t>(l.y);
    return dispersed;
  };
  SUBCASE("10 dispersed, 40 stable") {
    const auto labels = labels_with(10, 40);
    const auto ids = balance_classes(labels, 7);
    CHECK(ids.size() == 20);
    CHECK(count(labels, ids) == 10);
    CHECK(balance_classes(labels, 7) == ids);
    CHECK(balance_classes(labels, 8) != ids);
    // input order is kept
    std::vector<std::size_t> pos;
    for (auto id : ids)
      pos.push_back(static_cast<std::size_t>(std::find_if(labels.begin(), labels.end(), [&](const auto& l) { return l.node_id == id; }) - labels.begin()));
    CHECK(std::is_sorted(pos.begin(), pos.end()));
  }
  SUBCASE("already balanced") {
    const auto labels = labels_with(5, 5);
    CHECK(balance_classes(labels, 1).size() == 10);
  }
  SUBCASE("majority dispersed") {
    const auto labels = labels_with(30, 6);
    const auto ids = balance_classes(labels, 2);
    CHECK(ids.size() == 12);
    CHECK(count(labels, ids) == 6);
  }
  SUBCASE("empty class") {
    const auto labels = labels_with(0, 6);
    CHECK(error_kind([&] { balance_classes(labels, 1); }) == ErrorKind::EmptyClass);
  }
}

TEST_CASE("part filtering") {
  const auto ts = resting_set(20, 2, 3);  // parts cycle 1, 2, 3
  std::size_t in_part_2 = 0;
  for (auto p : ts.part_ids()) in_part_2 += p == 2 ? 1 : 0;
  REQUIRE(in_part_2 == 7);

  CHECK(filter_parts(ts, std::vector<std::int64_t>{}) == ts);
  const auto kept = filter_parts(ts, std::vector<std::int64_t>{2});
  CHECK(kept.node_count() == 13);
  for (auto p : kept.part_ids()) CHECK(p != 2);
  CHECK(std::is_sorted(kept.node_ids().begin(), kept.node_ids().end()));
  CHECK(error_kind([&] { filter_parts(ts, std::vector<std::int64_t>{1, 2, 3}); }) == ErrorKind::EmptyDataset);
  CHECK(error_kind([&] { filter_parts(ts, std::vector<std::int64_t>{9}); }) == ErrorKind::UnknownPartId);
}

TEST_CASE("node selection keeps the requested order") {
  const auto ts = resting_set(6, 2, 3);
  const std::vector<std::int64_t> ids = {15, 11};
  const auto sel = select_nodes(ts, ids);
  CHECK(sel.node_ids() == ids);
  CHECK(sel.at(0, 1, 2, Axis::Z) == ts.at(5, 1, 2, Axis::Z));
}

TEST_CASE("truncation") {
  const auto ts = resting_set(2, 2, 289);
  const auto cut = truncate_timesteps(ts, 220);
  CHECK(cut.timestep_count() == 220);
  CHECK(cut.time_ms().back() == ts.time_ms()[219]);
  CHECK(truncate_timesteps(ts, 289) == ts);
  CHECK(error_kind([&] { truncate_timesteps(ts, 1); }) == ErrorKind::OutOfRange);
  CHECK(error_kind([&] { truncate_timesteps(ts, 290); }) == ErrorKind::OutOfRange);
}
