#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dispersion {

enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

Axis parse_axis(const std::string& text);
const char* to_string(Axis axis);

/// All nodal trajectories of one scenario: node x run x timestep x xyz,
/// millimeters in the vehicle frame (x longitudinal, y lateral-left, z up),
/// time stamps in milliseconds.
///
/// Runs share node ids, part ids and the time grid. Positions at timestep 0
/// are identical across runs (exact equality).
class TrajectorySet {
 public:
  TrajectorySet() = default;
  TrajectorySet(std::vector<std::int64_t> node_ids, std::vector<std::int64_t> part_ids,
                std::size_t runs, std::vector<double> time_ms);

  std::size_t node_count() const { return node_ids_.size(); }
  std::size_t run_count() const { return runs_; }
  std::size_t timestep_count() const { return time_ms_.size(); }

  const std::vector<std::int64_t>& node_ids() const { return node_ids_; }
  const std::vector<std::int64_t>& part_ids() const { return part_ids_; }
  const std::vector<double>& time_ms() const { return time_ms_; }

  std::size_t offset(std::size_t node, std::size_t run, std::size_t t, std::size_t axis = 0) const {
    return ((node * runs_ + run) * time_ms_.size() + t) * 3 + axis;
  }

  double& at(std::size_t node, std::size_t run, std::size_t t, Axis axis) {
    return positions_[offset(node, run, t, static_cast<std::size_t>(axis))];
  }
  double at(std::size_t node, std::size_t run, std::size_t t, Axis axis) const {
    return positions_[offset(node, run, t, static_cast<std::size_t>(axis))];
  }

  /// The T x 3 block of one (node, run) trajectory.
  std::span<double> trajectory(std::size_t node, std::size_t run) {
    return {positions_.data() + offset(node, run, 0), time_ms_.size() * 3};
  }
  std::span<const double> trajectory(std::size_t node, std::size_t run) const {
    return {positions_.data() + offset(node, run, 0), time_ms_.size() * 3};
  }

  std::vector<double>& positions() { return positions_; }
  const std::vector<double>& positions() const { return positions_; }

  /// Index of a node id, or -1.
  std::ptrdiff_t find_node(std::int64_t node_id) const;

  /// Checks every type invariant; throws Error on the first violation.
  void validate() const;

  bool operator==(const TrajectorySet&) const = default;

 private:
  std::vector<std::int64_t> node_ids_;
  std::vector<std::int64_t> part_ids_;
  std::size_t runs_ = 0;
  std::vector<double> time_ms_;
  std::vector<double> positions_;
};

struct Units {
  std::string length = "mm";
  std::string time = "ms";
  bool operator==(const Units&) const = default;
};

struct DatasetManifest {
  std::string scenario;
  std::vector<std::filesystem::path> runs;
  std::size_t timesteps = 0;
  Units units;
  std::vector<std::int64_t> excluded_parts;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Container layout (little-endian):
///   "DSPC" | version u32 | N u32 | R u32 | T u32 | length unit u32 | time unit u32
///   | node ids i64[N] | part ids i64[N] | time stamps f64[T] | positions f64[N*R*T*3]
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderBytes = 4 + 6 * 4;

std::uintmax_t container_size_bytes(std::size_t nodes, std::size_t runs, std::size_t timesteps);

void save_trajectory_set(const TrajectorySet& ts, const std::filesystem::path& path);
TrajectorySet load_container(const std::filesystem::path& path);

/// Loads every run file of the manifest (each may hold one or more runs) and
/// concatenates runs in manifest order. Paths are resolved relative to
/// base_dir when not absolute.
TrajectorySet load_trajectory_set(const DatasetManifest& manifest,
                                  const std::filesystem::path& base_dir = {});

/// CSV fixture import: header `node_id,part_id,run,timestep,time_ms,x,y,z`,
/// one row per node-run-timestep in any order.
TrajectorySet load_csv(const std::filesystem::path& path);

/// FNV-1a over ids, time grid and position bytes.
std::uint64_t content_hash(const TrajectorySet& ts);

}  // namespace dispersion
