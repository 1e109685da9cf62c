#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include <doctest.h>

#include "dispersion/dataset.hpp"
#include "dispersion/error.hpp"

namespace testing {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dispersion_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Nodes on a non-degenerate 3-D grid, all runs at rest at their initial
/// positions; callers add motion.
inline dispersion::TrajectorySet resting_set(std::size_t nodes, std::size_t runs, std::size_t steps) {
  std::vector<std::int64_t> ids(nodes), parts(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    ids[i] = static_cast<std::int64_t>(10 + i);
    parts[i] = static_cast<std::int64_t>(1 + i % 3);
  }
  std::vector<double> time(steps);
  for (std::size_t t = 0; t < steps; ++t) time[t] = 0.5 * static_cast<double>(t);
  dispersion::TrajectorySet ts(ids, parts, runs, time);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t r = 0; r < runs; ++r)
      for (std::size_t t = 0; t < steps; ++t) {
        ts.at(i, r, t, dispersion::Axis::X) = 100.0 * static_cast<double>(i % 5) + 3.0 * static_cast<double>(i);
        ts.at(i, r, t, dispersion::Axis::Y) = 50.0 * static_cast<double>((i / 5) % 4) - 20.0;
        ts.at(i, r, t, dispersion::Axis::Z) = 30.0 * static_cast<double>(i % 7) + 0.5 * static_cast<double>(i * i % 11);
      }
  return ts;
}

template <class Fn>
dispersion::ErrorKind error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const dispersion::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return dispersion::ErrorKind::InvalidConfig;
}

}  // namespace testing
