#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posefit/evaluation.hpp"
#include "posefit/fitting.hpp"
#include "posefit/oracle.hpp"

namespace posefit {

// On-disk layout of a generated sequence directory.
inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kFramesFile = "frames.jsonl";
inline constexpr const char* kMapsFile = "maps.pfmp";
inline constexpr const char* kPosesFile = "poses.jsonl";

struct SequenceMeta {
  int frames = 0;
  double fps = 30.0;
  CameraModel camera;
  ObserveSettings settings;
  NoiseSpec noise;
  std::string skeleton_json;
  std::string rng = kRngName;
};

std::string meta_to_json(const SequenceMeta& meta);
SequenceMeta meta_from_json(const std::string& text);

// One frames.jsonl line: GT pose, camera-space joints, GT keypoints and the
// box/crop the maps were rendered in.
std::string frame_record(const GtFrame& gt, const Observation& obs);

struct StoredFrame {
  GtFrame gt;
  Keypoints2D gt_keypoints_frame;
  BoundingBox box;
  double crop_px = 368.0;
};

StoredFrame parse_frame_record(const std::string& line, int joint_count);
std::vector<StoredFrame> read_frames(const std::filesystem::path& path, int joint_count);

// One poses.jsonl line with the fitted pose and its diagnostics.
std::string pose_record(const FrameOutput& out);

// Reads the "joints" array of every line of a frames.jsonl or poses.jsonl.
PoseSequence read_joint_sequence(const std::filesystem::path& path);

}  // namespace posefit
