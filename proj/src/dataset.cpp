#include "dispersion/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "dispersion/binary_io.hpp"
#include "dispersion/error.hpp"

namespace dispersion {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'P', 'C'};

std::uint32_t length_unit_code(const std::string& unit) {
  if (unit == "mm") return 1;
  throw Error(ErrorKind::UnitMismatch, "unsupported length unit '" + unit + "' (expected mm)");
}

std::uint32_t time_unit_code(const std::string& unit) {
  if (unit == "ms") return 1;
  throw Error(ErrorKind::UnitMismatch, "unsupported time unit '" + unit + "' (expected ms)");
}

std::string describe_node(const TrajectorySet& ts, std::size_t node) {
  return "node " + std::to_string(ts.node_ids()[node]);
}

}  // namespace

Axis parse_axis(const std::string& text) {
  if (text == "x" || text == "X") return Axis::X;
  if (text == "y" || text == "Y") return Axis::Y;
  if (text == "z" || text == "Z") return Axis::Z;
  throw Error(ErrorKind::InvalidConfig, "unknown axis '" + text + "'");
}

const char* to_string(Axis axis) {
  switch (axis) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

TrajectorySet::TrajectorySet(std::vector<std::int64_t> node_ids, std::vector<std::int64_t> part_ids,
                             std::size_t runs, std::vector<double> time_ms)
    : node_ids_(std::move(node_ids)),
      part_ids_(std::move(part_ids)),
      runs_(runs),
      time_ms_(std::move(time_ms)) {
  if (node_ids_.size() != part_ids_.size())
    throw Error(ErrorKind::LengthMismatch, "node_ids and part_ids differ in length");
  positions_.assign(node_ids_.size() * runs_ * time_ms_.size() * 3, 0.0);
}

std::ptrdiff_t TrajectorySet::find_node(std::int64_t node_id) const {
  const auto it = std::find(node_ids_.begin(), node_ids_.end(), node_id);
  return it == node_ids_.end() ? -1 : std::distance(node_ids_.begin(), it);
}

void TrajectorySet::validate() const {
  if (node_ids_.empty()) throw Error(ErrorKind::EmptyDataset, "trajectory set has no nodes");
  if (runs_ < 1) throw Error(ErrorKind::EmptyDataset, "trajectory set has no runs");
  if (time_ms_.size() < 2) throw Error(ErrorKind::OutOfRange, "need at least 2 timesteps");
  if (part_ids_.size() != node_ids_.size())
    throw Error(ErrorKind::LengthMismatch, "part_ids length differs from node_ids");
  if (positions_.size() != node_ids_.size() * runs_ * time_ms_.size() * 3)
    throw Error(ErrorKind::LengthMismatch, "positions array has wrong size");
  for (std::size_t t = 0; t < time_ms_.size(); ++t) {
    if (!std::isfinite(time_ms_[t]))
      throw Error(ErrorKind::NonFiniteValue, "time stamp " + std::to_string(t) + " is not finite");
    if (t > 0 && !(time_ms_[t] > time_ms_[t - 1]))
      throw Error(ErrorKind::ZeroTimeIncrement,
                  "time stamps not strictly increasing at timestep " + std::to_string(t));
  }
  {
    auto sorted = node_ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(ErrorKind::MismatchedNodeSet, "duplicate node ids");
  }
  const std::size_t T = time_ms_.size();
  for (std::size_t n = 0; n < node_ids_.size(); ++n) {
    for (std::size_t r = 0; r < runs_; ++r) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t a = 0; a < 3; ++a) {
          if (!std::isfinite(positions_[offset(n, r, t, a)])) {
            std::ostringstream msg;
            msg << describe_node(*this, n) << " run " << r << " timestep " << t << " axis " << a;
            throw Error(ErrorKind::NonFiniteValue, msg.str());
          }
        }
      }
    }
  }
  std::vector<std::string> offenders;
  std::size_t offender_count = 0;
  for (std::size_t n = 0; n < node_ids_.size(); ++n) {
    for (std::size_t r = 1; r < runs_; ++r) {
      bool same = true;
      for (std::size_t a = 0; a < 3; ++a) same = same && positions_[offset(n, r, 0, a)] == positions_[offset(n, 0, 0, a)];
      if (!same) {
        if (offenders.size() < 8) offenders.push_back(describe_node(*this, n) + " (run " + std::to_string(r) + ")");
        ++offender_count;
        break;
      }
    }
  }
  if (offender_count != 0) {
    std::string msg = std::to_string(offender_count) + " node(s) differ from run 0 at timestep 0:";
    for (const auto& o : offenders) msg += " " + o + ";";
    throw Error(ErrorKind::InconsistentInitialConfiguration, msg);
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoFailure, "manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    m.scenario = j.value("scenario", std::string{});
    for (const auto& r : j.at("runs")) m.runs.emplace_back(r.get<std::string>());
    m.timesteps = j.at("timesteps").get<std::size_t>();
    if (j.contains("units")) {
      m.units.length = j["units"].value("length", std::string{"mm"});
      m.units.time = j["units"].value("time", std::string{"ms"});
    }
    if (j.contains("excluded_parts")) m.excluded_parts = j["excluded_parts"].get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["scenario"] = manifest.scenario;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : manifest.runs) j["runs"].push_back(r.string());
  j["timesteps"] = manifest.timesteps;
  j["units"] = {{"length", manifest.units.length}, {"time", manifest.units.time}};
  j["excluded_parts"] = manifest.excluded_parts;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::uintmax_t container_size_bytes(std::size_t nodes, std::size_t runs, std::size_t timesteps) {
  return kContainerHeaderBytes + 16ull * nodes + 8ull * timesteps + 24ull * nodes * runs * timesteps;
}

void save_trajectory_set(const TrajectorySet& ts, const std::filesystem::path& path) {
  if (ts.node_count() == 0) throw Error(ErrorKind::EmptyDataset, "refusing to save a dataset with no nodes");
  ts.validate();
  io::BinaryWriter w(path.string());
  w.bytes(kMagic, 4);
  w.value<std::uint32_t>(kContainerVersion);
  w.value<std::uint32_t>(static_cast<std::uint32_t>(ts.node_count()));
  w.value<std::uint32_t>(static_cast<std::uint32_t>(ts.run_count()));
  w.value<std::uint32_t>(static_cast<std::uint32_t>(ts.timestep_count()));
  w.value<std::uint32_t>(length_unit_code("mm"));
  w.value<std::uint32_t>(time_unit_code("ms"));
  w.array<std::int64_t>(ts.node_ids());
  w.array<std::int64_t>(ts.part_ids());
  w.array<double>(ts.time_ms());
  w.array<double>(ts.positions());
  w.close();
}

TrajectorySet load_container(const std::filesystem::path& path) {
  io::BinaryReader r(path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic))
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' is not a DSPC container");
  const auto version = r.value<std::uint32_t>();
  if (version != kContainerVersion)
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has container version " + std::to_string(version));
  const auto n = r.value<std::uint32_t>();
  const auto runs = r.value<std::uint32_t>();
  const auto t = r.value<std::uint32_t>();
  const auto length_unit = r.value<std::uint32_t>();
  const auto time_unit = r.value<std::uint32_t>();
  if (length_unit != length_unit_code("mm") || time_unit != time_unit_code("ms"))
    throw Error(ErrorKind::UnitMismatch, "'" + path.string() + "' declares non mm/ms units");
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "'" + path.string() + "' has no nodes");
  auto node_ids = r.array<std::int64_t>(n);
  auto part_ids = r.array<std::int64_t>(n);
  auto time_ms = r.array<double>(t);
  TrajectorySet ts(std::move(node_ids), std::move(part_ids), runs, std::move(time_ms));
  r.bytes(ts.positions().data(), ts.positions().size() * sizeof(double));
  if (!r.at_end()) throw Error(ErrorKind::IoFailure, "'" + path.string() + "' has trailing bytes");
  ts.validate();
  return ts;
}

TrajectorySet load_trajectory_set(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
  if (manifest.runs.empty()) throw Error(ErrorKind::EmptyDataset, "manifest lists no run files");
  length_unit_code(manifest.units.length);
  time_unit_code(manifest.units.time);

  std::vector<TrajectorySet> parts;
  parts.reserve(manifest.runs.size());
  for (const auto& p : manifest.runs) {
    const auto full = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    if (!std::filesystem::exists(full)) throw Error(ErrorKind::IoFailure, "run file '" + full.string() + "' does not exist");
    parts.push_back(load_container(full));
    const auto& loaded = parts.back();
    if (loaded.timestep_count() != manifest.timesteps)
      throw Error(ErrorKind::ManifestMismatch, "'" + full.string() + "' has " + std::to_string(loaded.timestep_count()) +
                                                   " timesteps, manifest declares " + std::to_string(manifest.timesteps));
  }

  const auto& first = parts.front();
  std::size_t total_runs = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.node_ids() != first.node_ids() || p.part_ids() != first.part_ids()) {
      std::string detail;
      for (auto id : first.node_ids())
        if (p.find_node(id) < 0) { detail = " (node " + std::to_string(id) + " missing)"; break; }
      if (detail.empty())
        for (auto id : p.node_ids())
          if (first.find_node(id) < 0) { detail = " (unexpected node " + std::to_string(id) + ")"; break; }
      throw Error(ErrorKind::MismatchedNodeSet,
                  "run file " + std::to_string(i) + " disagrees with run file 0 on node/part ids" + detail);
    }
    if (p.time_ms() != first.time_ms())
      throw Error(ErrorKind::ManifestMismatch, "run file " + std::to_string(i) + " has a different time grid");
    total_runs += p.run_count();
  }

  if (parts.size() == 1) {
    parts.front().validate();
    return std::move(parts.front());
  }

  TrajectorySet out(first.node_ids(), first.part_ids(), total_runs, first.time_ms());
  for (std::size_t n = 0; n < out.node_count(); ++n) {
    std::size_t run = 0;
    for (const auto& p : parts) {
      for (std::size_t r = 0; r < p.run_count(); ++r, ++run) {
        const auto src = p.trajectory(n, r);
        std::copy(src.begin(), src.end(), out.trajectory(n, run).begin());
      }
    }
  }
  out.validate();
  return out;
}

TrajectorySet load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyDataset, "'" + path.string() + "' is empty");

  struct Row {
    std::int64_t node, part;
    std::size_t run, t;
    double time, x, y, z;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Row row{};
    std::string x, y, z, time;
    if (!(ss >> row.node >> row.part >> row.run >> row.t >> time >> x >> y >> z))
      throw Error(ErrorKind::IoFailure, "malformed CSV row at line " + std::to_string(line_no));
    try {
      row.time = std::stod(time);
      row.x = std::stod(x);
      row.y = std::stod(y);
      row.z = std::stod(z);
    } catch (const std::exception&) {
      throw Error(ErrorKind::NonFiniteValue, "unparsable value at line " + std::to_string(line_no));
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "'" + path.string() + "' has no rows");

  std::map<std::int64_t, std::int64_t> node_part;
  std::size_t runs = 0, steps = 0;
  for (const auto& row : rows) {
    auto [it, inserted] = node_part.emplace(row.node, row.part);
    if (!inserted && it->second != row.part)
      throw Error(ErrorKind::MismatchedNodeSet, "node " + std::to_string(row.node) + " has conflicting part ids");
    runs = std::max(runs, row.run + 1);
    steps = std::max(steps, row.t + 1);
  }
  if (rows.size() != node_part.size() * runs * steps)
    throw Error(ErrorKind::MismatchedNodeSet, "CSV does not cover every node x run x timestep exactly once");

  std::vector<std::int64_t> node_ids, part_ids;
  for (auto [n, p] : node_part) {
    node_ids.push_back(n);
    part_ids.push_back(p);
  }
  std::vector<double> time(steps, std::nan(""));
  TrajectorySet ts(node_ids, part_ids, runs, std::vector<double>(steps, 0.0));
  std::vector<char> seen(node_ids.size() * runs * steps, 0);
  for (const auto& row : rows) {
    const auto n = static_cast<std::size_t>(std::distance(node_part.begin(), node_part.find(row.node)));
    const std::size_t slot = (n * runs + row.run) * steps + row.t;
    if (seen[slot]++) throw Error(ErrorKind::MismatchedNodeSet, "duplicate CSV row for node " + std::to_string(row.node));
    if (std::isnan(time[row.t])) time[row.t] = row.time;
    else if (time[row.t] != row.time)
      throw Error(ErrorKind::ManifestMismatch, "inconsistent time stamp for timestep " + std::to_string(row.t));
    ts.at(n, row.run, row.t, Axis::X) = row.x;
    ts.at(n, row.run, row.t, Axis::Y) = row.y;
    ts.at(n, row.run, row.t, Axis::Z) = row.z;
  }
  TrajectorySet out(node_ids, part_ids, runs, time);
  out.positions() = std::move(ts.positions());
  out.validate();
  return out;
}

std::uint64_t content_hash(const TrajectorySet& ts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t dims[3] = {ts.node_count(), ts.run_count(), ts.timestep_count()};
  mix(dims, sizeof(dims));
  mix(ts.node_ids().data(), ts.node_ids().size() * sizeof(std::int64_t));
  mix(ts.part_ids().data(), ts.part_ids().size() * sizeof(std::int64_t));
  mix(ts.time_ms().data(), ts.time_ms().size() * sizeof(double));
  mix(ts.positions().data(), ts.positions().size() * sizeof(double));
  return h;
}

}  // namespace dispersion
