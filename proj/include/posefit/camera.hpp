#pragma once

#include <filesystem>

#include "posefit/skeleton.hpp"

namespace posefit {

inline constexpr double kDefaultVerticalFovDeg = 54.0;

struct ImageSize {
  int width = 0;
  int height = 0;
};

// Ideal pinhole: square pixels, zero skew, no distortion.
struct CameraModel {
  double focal_px = 1.0;
  Vec2 principal_point = Vec2::Zero();
  ImageSize image_size;

  CameraModel() = default;
  CameraModel(double focal, Vec2 principal, ImageSize size);

  static CameraModel from_vertical_fov(double fov_deg, ImageSize size);

  // Throws ContractError for z <= 0.
  Vec2 project(const Vec3& p) const;
  // Same as project() but clamps z to min_depth; *clamped tells whether it did.
  Vec2 project_clamped(const Vec3& p, double min_depth, bool* clamped = nullptr) const;
  Vec3 backproject(const Vec2& uv, double depth_mm) const;
};

// Intrinsics file: {"focal_px": f, "principal_point": [cx, cy], "width": w, "height": h}
CameraModel load_camera(const std::filesystem::path& path);

}  // namespace posefit
