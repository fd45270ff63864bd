#pragma once

#include <optional>

#include "posefit/camera.hpp"
#include "posefit/posemaps.hpp"

namespace posefit {

struct BoundingBox {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
  Vec2 center() const { return 0.5 * (min + max); }
  bool valid() const { return min.x() < max.x() && min.y() < max.y(); }
  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
  // Max corner-coordinate distance to another box.
  double corner_distance(const BoundingBox& other) const;
};

struct BoxTrackerParams {
  double momentum = 0.75;
  double buffer_w = 0.4;
  double buffer_h = 0.2;
  double crop_px = 368.0;
  // Keypoint spans thinner than this are widened before buffering.
  double min_extent_px = 16.0;
};

enum class ProposalStatus { fresh, stale, bootstrap };

struct Proposal {
  BoundingBox box;
  ProposalStatus status = ProposalStatus::fresh;
};

// Smallest rectangle around the visible keypoints, grown by buffer_w of its
// width and buffer_h of its height (split evenly) and centered horizontally
// on the keypoint centroid. Not clamped to the frame.
BoundingBox buffered_box(const Keypoints2D& keypoints_frame, const BoxTrackerParams& params = {});

Proposal propose(const std::optional<BoundingBox>& previous, const Keypoints2D& keypoints_frame,
                 ImageSize frame, const BoxTrackerParams& params = {});

/// Anisotropic affine map between full-frame pixels and a square crop.
class CropTransform {
 public:
  CropTransform() = default;
  CropTransform(const BoundingBox& box, double crop_px = 368.0);

  Vec2 to_crop(const Vec2& frame_px) const;
  Vec2 to_frame(const Vec2& crop_px) const;
  Keypoints2D to_crop(const Keypoints2D& k) const;
  Keypoints2D to_frame(const Keypoints2D& k) const;

  const BoundingBox& box() const { return box_; }
  double crop_px() const { return crop_px_; }
  // Frame pixels per crop pixel along x and y.
  Vec2 scale() const { return scale_; }

 private:
  BoundingBox box_{Vec2::Zero(), Vec2(368.0, 368.0)};
  double crop_px_ = 368.0;
  Vec2 scale_ = Vec2::Ones();
};

/// Keeps the previous box for one stream.
class BoxTracker {
 public:
  BoxTracker(ImageSize frame, BoxTrackerParams params = {}) : frame_(frame), params_(params) {}

  Proposal update(const Keypoints2D& keypoints_frame);
  const std::optional<BoundingBox>& current() const { return box_; }
  void seed(const BoundingBox& box) { box_ = box; }

 private:
  ImageSize frame_;
  BoxTrackerParams params_;
  std::optional<BoundingBox> box_;
};

}  // namespace posefit
