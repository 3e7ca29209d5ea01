#pragma once

#include <cstdint>
#include <filesystem>

#include "splitgs/dataset.hpp"
#include "splitgs/scene.hpp"

namespace splitgs {

/// Parameters of the synthetic desk-scale sequence: a textured wall and
/// floor plus one cluster of colored splats on a circular path.
struct SynthSpec {
    int width = 64;
    int height = 64;
    int frame_count = 60;
    double focal = 72.0;
    int wall_grid = 26;
    int floor_grid = 16;
    int blob_count = 40;
    double blob_radius = 0.13;
    double mask_threshold = 1e-3;  // blob footprint weight cutoff
    bool write_depth = true;
};

/// Analytic ground truth: fixed backdrop cloud, canonical blob cloud, and
/// the blob's rigid trajectory.
struct GroundTruthScene {
    GaussianCloud backdrop;
    GaussianCloud blob;
    Eigen::Vector3d blob_center = Eigen::Vector3d::Zero();
    double path_radius_x = 0.42;
    double path_radius_y = 0.26;
    double path_turns = 0.75;

    Eigen::Vector3d blob_offset(double t) const;
    /// Blob cloud rigidly translated to its pose at time t.
    GaussianCloud blob_at(double t) const;
};

GroundTruthScene make_ground_truth(const SynthSpec& spec, uint64_t seed);

/// Camera on a gentle horizontal arc, indexed by normalized time.
Camera synth_camera(const SynthSpec& spec, double t);

/// Generate and write the dataset: frames/, masks/, depth/, plates/,
/// manifest.json, init_points.txt. Deterministic in (spec, seed).
void synth_scene(const SynthSpec& spec, uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace splitgs
