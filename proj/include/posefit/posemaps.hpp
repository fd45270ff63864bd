#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "posefit/skeleton.hpp"

namespace posefit {

// Row-major planes: rows index y cells, columns index x cells.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GridSpec {
  int width = 46;
  int height = 46;
  double stride_px = 8.0;

  double crop_width_px() const { return width * stride_px; }
  double crop_height_px() const { return height * stride_px; }
  // Center of cell (cx, cy) in crop pixels.
  Vec2 cell_center(int cx, int cy) const {
    return Vec2((cx + 0.5) * stride_px, (cy + 0.5) * stride_px);
  }
  bool contains(const Vec2& crop_px) const;
};

inline constexpr double kDefaultHeatmapSigmaCells = 1.75;

struct JointMaps {
  Plane heat;  // H_j
  Plane x;     // X_j (mm, root-relative)
  Plane y;     // Y_j
  Plane z;     // Z_j
};

struct MapStack {
  GridSpec grid;
  std::vector<JointMaps> joints;

  int joint_count() const { return static_cast<int>(joints.size()); }
  static MapStack zeros(const GridSpec& grid, int joint_count);
  // Throws ContractError on shape mismatch or non-finite values.
  void validate() const;
};

/// Per-joint 2D locations; visible is false for absent joints.
struct Keypoints2D {
  Points2 location;
  std::vector<double> confidence;
  std::vector<bool> visible;

  static Keypoints2D all_visible(Points2 locations);
  int size() const { return static_cast<int>(location.size()); }
  int visible_count() const;
};

struct Decoded {
  Keypoints2D keypoints;  // crop pixels
  LocalPose3D local;      // missing joints hold zeros
};

struct Lookup {
  LocalPose3D local;
  std::vector<bool> valid;    // false where the given keypoint was not visible
  std::vector<bool> clamped;  // keypoint fell outside the crop
};

/// Ground-truth maps: per joint a peak-normalized Gaussian (truncated at
/// 3 sigma) centered on the keypoint and constant location-maps holding the
/// joint's root-relative coordinates. Keypoints outside the crop, or flagged
/// invisible, produce all-zero planes.
MapStack render_gt(const Keypoints2D& keypoints_crop, const LocalPose3D& local, const GridSpec& grid,
                   double sigma_cells = kDefaultHeatmapSigmaCells);

// (cx, cy) of the maximum; ties go to the lowest row-major index.
// Empty when the plane has no positive value.
std::optional<Eigen::Vector2i> argmax_cell(const Plane& heat);

Eigen::Vector2i cell_of(const GridSpec& grid, const Vec2& crop_px, bool* clamped = nullptr);

// Sub-cell peak offset from a log-parabola through the argmax cell and its
// axis neighbours, clamped to stay inside the argmax cell. Zero along an axis
// where a neighbour is missing or non-positive.
Vec2 subcell_offset(const Plane& heat, const Eigen::Vector2i& cell);

struct DecodeOptions {
  // Off: keypoints sit on argmax cell centers.
  bool subcell_refinement = false;
};

Decoded decode(const MapStack& maps, int root = 0, const DecodeOptions& options = {});
Lookup decode_at(const MapStack& maps, const Keypoints2D& keypoints_crop, int root = 0);

struct LocmapLoss {
  double loss = 0.0;
  Plane gradient;
};

// || H_gt .* (X_pred - X_gt) ||_2 and its gradient with respect to X_pred.
LocmapLoss locmap_loss(const Plane& x_pred, const Plane& x_gt, const Plane& h_gt);

Plane bone_length_map(const Plane& dx, const Plane& dy, const Plane& dz);

// Map-tensor records: 16-byte little-endian header
//   "PFMP" | u16 version | u16 J | u16 W | u16 H | u32 stride_px * 1000
// followed by J x 4 float32 planes (H, X, Y, Z per joint), row-major.
inline constexpr std::uint16_t kMapFormatVersion = 1;

void write_maps(std::ostream& out, const MapStack& maps);
// Returns nullopt at a clean end of stream; throws DataError on corruption.
std::optional<MapStack> read_maps(std::istream& in);

}  // namespace posefit
