#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace affect::facegraph {

inline constexpr std::size_t kNumLandmarks = 468;

// Mesh index 1 is the nose-tip vertex of the canonical 468-point face mesh.
// Normalization is always relative to this row.
inline constexpr std::size_t kNoseTipIndex = 1;

using LandmarkMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// 468 normalized landmarks. The nose tip sits at the origin and every
/// coordinate lies in [-1, 1].
class LandmarkSet {
 public:
  LandmarkSet();
  /// Wraps already-normalized coordinates; throws when the row count or value range is wrong.
  explicit LandmarkSet(LandmarkMatrix coords, std::array<bool, 3> degenerate_axes = {});

  const LandmarkMatrix& coords() const { return coords_; }
  /// Axes whose extent was zero before scaling; those columns are all zeros.
  const std::array<bool, 3>& degenerate_axes() const { return degenerate_; }
  bool any_degenerate() const { return degenerate_[0] || degenerate_[1] || degenerate_[2]; }

 private:
  LandmarkMatrix coords_;
  std::array<bool, 3> degenerate_{};
};

/// Translates the nose tip to the origin, then scales each axis by the
/// largest absolute coordinate on that axis so the extreme landmark lands on
/// -1 or +1. A zero-extent axis maps to zeros and is flagged.
/// Throws InvalidInputError for a wrong row count or non-finite input.
LandmarkSet normalize_landmarks(const LandmarkMatrix& raw);

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// An undirected simple graph: no self-loops, no duplicate edges.
struct GraphTopology {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;

  /// Throws InvalidInputError on out-of-range indices, self-loops or duplicates.
  void validate() const;
  std::vector<std::size_t> degrees() const;
};

struct ContourGroup {
  std::string name;
  std::vector<std::size_t> nodes;
};

/// The fixed face topology loaded from the versioned data file.
struct FaceTopology {
  std::string version;
  std::string content_hash;
  GraphTopology graph;
  std::vector<ContourGroup> groups;
};

/// Parses and verifies a topology file. Throws LoadError naming the file when
/// it is missing, malformed, or its content hash does not match the header.
FaceTopology load_topology(const std::filesystem::path& path);

std::filesystem::path default_topology_path();

/// The canonical face topology, loaded once from default_topology_path().
std::shared_ptr<const FaceTopology> build_topology();

struct FaceGraph {
  LandmarkSet landmarks;
  std::shared_ptr<const FaceTopology> topology;
};

// Landmark CSV: frame_id, face_id, x_0, y_0, z_0, ..., x_467, y_467, z_467.
std::string landmark_csv_header();
std::string landmark_csv_row(const std::string& frame_id, int face_id, const LandmarkSet& landmarks);

struct LandmarkRow {
  std::string frame_id;
  int face_id = 0;
  LandmarkMatrix coords;
};

std::vector<LandmarkRow> read_landmark_csv(const std::filesystem::path& path);

}  // namespace affect::facegraph
