#include "posefit/pipeline.hpp"

namespace posefit {

PipelineRun run_pipeline(const GeneratedSequence& sequence, const Skeleton& skeleton,
                         const NoiseSpec& noise, const ObserveSettings& settings,
                         const TrackerConfig& config) {
  PipelineRun run;
  SequenceTracker tracker(skeleton, sequence.camera, config);
  simulate(sequence, skeleton, noise, settings, [&](const GtFrame& gt, const Observation& obs) {
    FrameInput in{obs.maps, obs.crop, gt.timestamp_s, obs.gt_keypoints_frame};
    FrameOutput out = tracker.process(in);
    run.gt.push_back(gt.joints);
    run.predicted.push_back(out.global_positions);
    run.raw_local.push_back(out.raw_local.positions);
    if (out.fit.flagged()) ++run.flagged_frames;
    run.frames.push_back(std::move(out));
  });
  return run;
}

PoseSequence tail(const PoseSequence& seq, std::size_t warmup) {
  if (warmup >= seq.size()) return {};
  return PoseSequence(seq.begin() + static_cast<std::ptrdiff_t>(warmup), seq.end());
}

}  // namespace posefit
