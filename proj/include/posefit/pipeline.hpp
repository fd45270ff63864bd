#pragma once

#include <functional>
#include <vector>

#include "posefit/evaluation.hpp"
#include "posefit/fitting.hpp"
#include "posefit/oracle.hpp"

namespace posefit {

struct PipelineRun {
  PoseSequence gt;         // camera-space GT joints
  PoseSequence predicted;  // filtered fitted joints, camera space
  PoseSequence raw_local;  // per-frame decode, root-relative
  std::vector<FrameOutput> frames;
  int flagged_frames = 0;
};

/// Oracle, box tracker and sequence tracker in one closed loop.
PipelineRun run_pipeline(const GeneratedSequence& sequence, const Skeleton& skeleton,
                         const NoiseSpec& noise, const ObserveSettings& settings,
                         const TrackerConfig& config);

// Drops the first `warmup` frames.
PoseSequence tail(const PoseSequence& seq, std::size_t warmup);

}  // namespace posefit
