#include "posefit/bbox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

double BoundingBox::corner_distance(const BoundingBox& other) const {
  return std::max((min - other.min).cwiseAbs().maxCoeff(), (max - other.max).cwiseAbs().maxCoeff());
}

BoundingBox buffered_box(const Keypoints2D& k, const BoxTrackerParams& params) {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  Vec2 centroid = Vec2::Zero();
  int count = 0;
  for (int j = 0; j < k.size(); ++j) {
    if (!k.visible[j]) continue;
    lo = lo.cwiseMin(k.location[j]);
    hi = hi.cwiseMax(k.location[j]);
    centroid += k.location[j];
    ++count;
  }
  require(count > 0, "bounding box needs at least one visible keypoint");
  centroid /= count;

  const double w = std::max(hi.x() - lo.x(), params.min_extent_px);
  const double h = std::max(hi.y() - lo.y(), params.min_extent_px);
  const double cy = 0.5 * (lo.y() + hi.y());
  const double half_w = 0.5 * w * (1.0 + params.buffer_w);
  const double half_h = 0.5 * h * (1.0 + params.buffer_h);
  return {Vec2(centroid.x() - half_w, cy - half_h), Vec2(centroid.x() + half_w, cy + half_h)};
}

Proposal propose(const std::optional<BoundingBox>& previous, const Keypoints2D& k, ImageSize frame,
                 const BoxTrackerParams& params) {
  if (k.visible_count() == 0) {
    if (previous) return {*previous, ProposalStatus::stale};
    return {BoundingBox{}, ProposalStatus::bootstrap};
  }
  BoundingBox box = buffered_box(k, params);
  if (previous) {
    box.min = params.momentum * previous->min + (1.0 - params.momentum) * box.min;
    box.max = params.momentum * previous->max + (1.0 - params.momentum) * box.max;
  }
  const Vec2 limit(frame.width, frame.height);
  box.min = box.min.cwiseMax(Vec2::Zero()).cwiseMin(limit);
  box.max = box.max.cwiseMax(Vec2::Zero()).cwiseMin(limit);
  if (!box.valid()) box = {Vec2::Zero(), limit};
  return {box, ProposalStatus::fresh};
}

CropTransform::CropTransform(const BoundingBox& box, double crop_px) : box_(box), crop_px_(crop_px) {
  require(box.valid() && box.min.allFinite() && box.max.allFinite(), "degenerate bounding box");
  require(crop_px > 0.0, "crop size must be positive");
  scale_ = Vec2(box.width() / crop_px, box.height() / crop_px);
}

Vec2 CropTransform::to_crop(const Vec2& p) const {
  return (p - box_.min).cwiseQuotient(scale_);
}

Vec2 CropTransform::to_frame(const Vec2& c) const { return box_.min + c.cwiseProduct(scale_); }

Keypoints2D CropTransform::to_crop(const Keypoints2D& k) const {
  Keypoints2D out = k;
  for (auto& p : out.location) p = to_crop(p);
  return out;
}

Keypoints2D CropTransform::to_frame(const Keypoints2D& k) const {
  Keypoints2D out = k;
  for (auto& p : out.location) p = to_frame(p);
  return out;
}

Proposal BoxTracker::update(const Keypoints2D& keypoints_frame) {
  Proposal p = propose(box_, keypoints_frame, frame_, params_);
  if (p.status == ProposalStatus::fresh) box_ = p.box;
  return p;
}

}  // namespace posefit
