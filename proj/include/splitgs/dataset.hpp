#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "splitgs/camera.hpp"
#include "splitgs/image.hpp"

namespace splitgs {

/// One training observation.
struct Frame {
    ImageF image;                // H x W x 3 in [0,1]
    ImageF mask;                 // H x W, exactly 0 or 1 (1 = static region)
    std::optional<ImageF> depth; // H x W, world units
    double time = 0;             // normalized timestamp
    Camera camera;
};

struct Dataset {
    std::vector<Frame> frames;
    int width = 0;
    int height = 0;
    std::vector<Eigen::Vector3d> init_points;
    std::vector<Eigen::Vector3d> init_colors;
    Eigen::Vector3d bounds_min = Eigen::Vector3d(-1, -1, -1);
    Eigen::Vector3d bounds_max = Eigen::Vector3d(1, 1, 1);
    bool has_bounds = false;

    size_t size() const { return frames.size(); }
    bool has_depth() const;
    /// Plates (clean static-only references) are optional side data used by
    /// leakage checks; loaded when a plates/ directory exists.
    std::vector<ImageF> plates;
};

/// Ingest a dataset directory: manifest.json, frames/NNNN.png, masks/NNNN.png,
/// optional depth/NNNN.pfm, optional init_points.txt, optional plates/.
/// Timestamps are assigned as i/(T-1).
Dataset load_dataset(const std::filesystem::path& dir);

/// Serialize a camera record for the manifest.
void write_manifest(const std::filesystem::path& path, int width, int height,
                    const std::vector<Camera>& cameras,
                    const std::vector<std::string>& image_files,
                    const std::vector<std::string>& mask_files,
                    const std::vector<std::string>& depth_files,
                    const Eigen::Vector3d* bounds_min, const Eigen::Vector3d* bounds_max);

}  // namespace splitgs
