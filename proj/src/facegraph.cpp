#include "affect/facegraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <utility>

#include "affect/error.hpp"
#include "affect/hashing.hpp"
#include "affect/text.hpp"

#ifndef AFFECT_DATA_DIR
#define AFFECT_DATA_DIR "data"
#endif

namespace affect::facegraph {

LandmarkSet::LandmarkSet() : coords_(LandmarkMatrix::Zero(kNumLandmarks, 3)) {}

LandmarkSet::LandmarkSet(LandmarkMatrix coords, std::array<bool, 3> degenerate_axes)
    : coords_(std::move(coords)), degenerate_(degenerate_axes) {
  if (static_cast<std::size_t>(coords_.rows()) != kNumLandmarks) {
    throw InvalidInputError("landmark set needs 468 rows, got " + std::to_string(coords_.rows()));
  }
  if (!coords_.allFinite() || coords_.cwiseAbs().maxCoeff() > 1.0) {
    throw InvalidInputError("normalized landmarks must be finite and lie in [-1, 1]");
  }
}

LandmarkSet normalize_landmarks(const LandmarkMatrix& raw) {
  if (static_cast<std::size_t>(raw.rows()) != kNumLandmarks) {
    throw InvalidInputError("expected 468 landmark rows, got " + std::to_string(raw.rows()));
  }
  if (!raw.allFinite()) throw InvalidInputError("landmarks contain non-finite coordinates");

  LandmarkMatrix out = raw.rowwise() - raw.row(kNoseTipIndex);
  std::array<bool, 3> degenerate{};
  for (int axis = 0; axis < 3; ++axis) {
    const double extent = out.col(axis).cwiseAbs().maxCoeff();
    if (extent == 0.0) {
      degenerate[axis] = true;
      out.col(axis).setZero();
    } else {
      out.col(axis) /= extent;
    }
  }
  return LandmarkSet(std::move(out), degenerate);
}

void GraphTopology::validate() const {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : edges) {
    if (e.i >= num_nodes || e.j >= num_nodes) {
      throw InvalidInputError("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                              ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    }
    if (e.i == e.j) throw InvalidInputError("self-loop at node " + std::to_string(e.i));
    if (!seen.emplace(std::min(e.i, e.j), std::max(e.i, e.j)).second) {
      throw InvalidInputError("duplicate edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
    }
  }
}

std::vector<std::size_t> GraphTopology::degrees() const {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& e : edges) {
    ++deg[e.i];
    ++deg[e.j];
  }
  return deg;
}

namespace {

constexpr std::string_view kHeaderPrefix = "# face-topology ";

}  // namespace

FaceTopology load_topology(const std::filesystem::path& path) {
  std::string contents;
  try {
    contents = text::read_file(path);
  } catch (const LoadError&) {
    throw LoadError("topology file missing or unreadable: " + path.string());
  }
  const auto fail = [&](const std::string& why) {
    return LoadError("corrupt topology file " + path.string() + ": " + why);
  };

  const auto newline = contents.find('\n');
  if (newline == std::string::npos) throw fail("no header line");
  const std::string_view header(contents.data(), newline);
  if (!header.starts_with(kHeaderPrefix)) throw fail("bad header");
  // "# face-topology <version> sha256=<hex>"
  const auto fields = text::split(header.substr(kHeaderPrefix.size()), ' ');
  if (fields.size() != 2 || !fields[1].starts_with("sha256=")) throw fail("bad header");

  FaceTopology topo;
  topo.version = std::string(fields[0]);
  topo.content_hash = std::string(fields[1].substr(7));
  const std::string_view body(contents.data() + newline + 1, contents.size() - newline - 1);
  if (sha256_hex(body) != topo.content_hash) throw fail("content hash mismatch");

  topo.graph.num_nodes = kNumLandmarks;
  std::istringstream lines{std::string(body)};
  std::string line;
  while (std::getline(lines, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.starts_with("# group ")) {
      topo.groups.push_back({std::string(t.substr(8)), {}});
      continue;
    }
    if (t.front() == '#') continue;
    const auto parts = text::split(t, ' ');
    if (parts.size() != 2) throw fail("malformed edge line '" + std::string(t) + "'");
    Edge e;
    try {
      e.i = static_cast<std::size_t>(text::parse_int(parts[0]));
      e.j = static_cast<std::size_t>(text::parse_int(parts[1]));
    } catch (const InvalidInputError&) {
      throw fail("malformed edge line '" + std::string(t) + "'");
    }
    topo.graph.edges.push_back(e);
    if (!topo.groups.empty()) {
      auto& nodes = topo.groups.back().nodes;
      for (auto n : {e.i, e.j}) {
        if (std::find(nodes.begin(), nodes.end(), n) == nodes.end()) nodes.push_back(n);
      }
    }
  }
  try {
    topo.graph.validate();
  } catch (const InvalidInputError& err) {
    throw fail(err.what());
  }
  return topo;
}

std::filesystem::path default_topology_path() {
  if (const char* dir = std::getenv("AFFECT_DATA_DIR"); dir && *dir) {
    return std::filesystem::path(dir) / "face_topology_v1.txt";
  }
  return std::filesystem::path(AFFECT_DATA_DIR) / "face_topology_v1.txt";
}

std::shared_ptr<const FaceTopology> build_topology() {
  static std::mutex mu;
  static std::shared_ptr<const FaceTopology> cached;
  std::lock_guard lock(mu);
  if (!cached) cached = std::make_shared<const FaceTopology>(load_topology(default_topology_path()));
  return cached;
}

std::string landmark_csv_header() {
  std::string h = "frame_id,face_id";
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    const auto s = std::to_string(i);
    h += ",x_" + s + ",y_" + s + ",z_" + s;
  }
  return h;
}

std::string landmark_csv_row(const std::string& frame_id, int face_id, const LandmarkSet& landmarks) {
  std::string row = frame_id + "," + std::to_string(face_id);
  const auto& c = landmarks.coords();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (int a = 0; a < 3; ++a) {
      row += ',';
      row += text::format_double(c(r, a));
    }
  }
  return row;
}

std::vector<LandmarkRow> read_landmark_csv(const std::filesystem::path& path) {
  const auto table = text::read_csv(path);
  if (text::join(table.header) != landmark_csv_header()) {
    throw LoadError(path.string() + ": header does not match the landmark CSV schema");
  }
  std::vector<LandmarkRow> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    LandmarkRow row;
    row.frame_id = r[0];
    row.face_id = static_cast<int>(text::parse_int(r[1]));
    row.coords.resize(kNumLandmarks, 3);
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      for (std::size_t a = 0; a < 3; ++a) {
        row.coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = text::parse_double(r[2 + 3 * i + a]);
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace affect::facegraph
