#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "splitgs/camera.hpp"
#include "splitgs/config.hpp"
#include "splitgs/scene.hpp"

namespace splitgs {

enum class TrainPhase : int32_t { kNone = 0, kDap = 1, kStage1 = 2, kStage2 = 3, kDone = 4 };

/// Full training state: config snapshot, scene parameters, optimizer moments,
/// counters, RNG state, and the dataset's (time, camera) pairs so `render`
/// can pick a viewpoint without the dataset.
struct Checkpoint {
    TrainConfig config;
    Scene scene;
    std::map<std::string, AdamSlot> adam;
    TrainPhase phase = TrainPhase::kNone;
    int64_t phase_step = 0;
    int64_t global_step = 0;
    std::string rng_state;
    double depth_align_scale = 1.0;
    double depth_align_offset = 0.0;
    bool depth_align_done = false;
    std::vector<double> camera_times;
    std::vector<Camera> cameras;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Atomic write (temp + rename) with an embedded FNV-1a payload hash.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Verifies magic, version, and payload hash; throws IntegrityError on
/// corruption or version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace splitgs
