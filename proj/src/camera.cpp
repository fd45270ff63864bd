#include "posefit/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

CameraModel::CameraModel(double focal, Vec2 principal, ImageSize size)
    : focal_px(focal), principal_point(std::move(principal)), image_size(size) {
  require(focal_px > 0.0 && std::isfinite(focal_px), "focal length must be positive");
  require(image_size.width > 0 && image_size.height > 0, "image size must be positive");
  require(principal_point.x() >= 0.0 && principal_point.x() <= image_size.width &&
              principal_point.y() >= 0.0 && principal_point.y() <= image_size.height,
          "principal point must lie inside the image");
}

CameraModel CameraModel::from_vertical_fov(double fov_deg, ImageSize size) {
  require(fov_deg > 0.0 && fov_deg < 180.0, "vertical field of view must be in (0, 180) degrees");
  require(size.width > 0 && size.height > 0, "image size must be positive");
  const double half = 0.5 * fov_deg * std::numbers::pi / 180.0;
  const double f = 0.5 * size.height / std::tan(half);
  return CameraModel(f, Vec2(0.5 * size.width, 0.5 * size.height), size);
}

Vec2 CameraModel::project(const Vec3& p) const {
  require(p.z() > 0.0, "point is behind the camera");
  return Vec2(focal_px * p.x() / p.z() + principal_point.x(),
              focal_px * p.y() / p.z() + principal_point.y());
}

Vec2 CameraModel::project_clamped(const Vec3& p, double min_depth, bool* clamped) const {
  const double z = std::max(p.z(), min_depth);
  if (clamped) *clamped = p.z() < min_depth;
  return Vec2(focal_px * p.x() / z + principal_point.x(),
              focal_px * p.y() / z + principal_point.y());
}

Vec3 CameraModel::backproject(const Vec2& uv, double depth_mm) const {
  require(depth_mm > 0.0, "backprojection depth must be positive");
  return Vec3((uv.x() - principal_point.x()) * depth_mm / focal_px,
              (uv.y() - principal_point.y()) * depth_mm / focal_px, depth_mm);
}

CameraModel load_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open intrinsics file " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto pp = doc.at("principal_point").get<std::vector<double>>();
    if (pp.size() != 2) throw DataError("principal_point needs two values");
    return CameraModel(doc.at("focal_px").get<double>(), Vec2(pp[0], pp[1]),
                       ImageSize{doc.at("width").get<int>(), doc.at("height").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed intrinsics file: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid intrinsics: ") + e.what());
  }
}

}  // namespace posefit
