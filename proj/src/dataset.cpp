#include "splitgs/dataset.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

#include "splitgs/image_io.hpp"

namespace splitgs {

using nlohmann::json;

bool Dataset::has_depth() const {
    for (const auto& f : frames)
        if (f.depth) return true;
    return false;
}

namespace {

Camera camera_from_json(const json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.near = j.value("near", 0.05);
    cam.far = j.value("far", 100.0);
    const auto m = j.at("world_to_camera").get<std::vector<double>>();
    if (m.size() != 16) throw DatasetError("manifest: world_to_camera needs 16 entries");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m[r * 4 + c];
    cam.validate();
    return cam;
}

json camera_to_json(const Camera& cam) {
    std::vector<double> m(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m[r * 4 + c] = cam.world_to_camera(r, c);
    return json{{"fx", cam.fx},       {"fy", cam.fy},   {"cx", cam.cx},
                {"cy", cam.cy},       {"width", cam.width}, {"height", cam.height},
                {"near", cam.near},   {"far", cam.far}, {"world_to_camera", m}};
}

ImageF load_mask(const std::filesystem::path& path, int width, int height) {
    ImageU8 raw = read_png(path);
    if (raw.channels() != 1) throw DatasetError("mask must be grayscale: " + path.string());
    if (raw.width() != width || raw.height() != height)
        throw DatasetError("mask resolution mismatch: " + path.string());
    ImageF mask(width, height, 1);
    bool warned = false;
    for (size_t i = 0; i < raw.size(); ++i) {
        const unsigned char v = raw[i];
        if (v != 0 && v != 255 && !warned) {
            log_warn("mask has non-binary pixels, thresholding at 128: " + path.string());
            warned = true;
        }
        mask[i] = v >= 128 ? 1.0 : 0.0;
    }
    return mask;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DatasetError("missing manifest: " + manifest_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DatasetError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset ds;
    try {
        ds.width = j.at("width").get<int>();
        ds.height = j.at("height").get<int>();
        if (j.contains("scene_bounds")) {
            const auto lo = j["scene_bounds"].at("min").get<std::vector<double>>();
            const auto hi = j["scene_bounds"].at("max").get<std::vector<double>>();
            if (lo.size() != 3 || hi.size() != 3)
                throw DatasetError("manifest: scene_bounds needs 3-vectors");
            ds.bounds_min = Eigen::Vector3d(lo[0], lo[1], lo[2]);
            ds.bounds_max = Eigen::Vector3d(hi[0], hi[1], hi[2]);
            ds.has_bounds = true;
        }
        const auto& frames = j.at("frames");
        if (!frames.is_array() || frames.empty())
            throw DatasetError("manifest: frames must be a non-empty array");
        const size_t T = frames.size();
        if (j.contains("frame_count") && j["frame_count"].get<size_t>() != T)
            throw DatasetError("manifest: frame_count disagrees with frames array");

        ds.frames.reserve(T);
        for (size_t i = 0; i < T; ++i) {
            const auto& fj = frames[i];
            Frame f;
            f.camera = camera_from_json(fj.at("camera"));
            if (f.camera.width != ds.width || f.camera.height != ds.height)
                throw DatasetError("manifest: camera size disagrees with dataset size at frame " +
                                   std::to_string(i));

            const auto image_path = dir / fj.at("image").get<std::string>();
            if (!std::filesystem::exists(image_path))
                throw DatasetError("missing frame image: " + image_path.string());
            ImageU8 img = read_png(image_path);
            if (img.channels() != 3) throw DatasetError("frame must be RGB: " + image_path.string());
            if (img.width() != ds.width || img.height() != ds.height)
                throw DatasetError("frame resolution mismatch: " + image_path.string());
            f.image = to_float(img);

            const auto mask_path = dir / fj.at("mask").get<std::string>();
            if (!std::filesystem::exists(mask_path))
                throw DatasetError("missing mask image: " + mask_path.string());
            f.mask = load_mask(mask_path, ds.width, ds.height);

            if (fj.contains("depth")) {
                const auto depth_path = dir / fj["depth"].get<std::string>();
                if (!std::filesystem::exists(depth_path))
                    throw DatasetError("missing depth map: " + depth_path.string());
                Image<float> pfm = read_pfm(depth_path);
                if (pfm.width() != ds.width || pfm.height() != ds.height)
                    throw DatasetError("depth resolution mismatch: " + depth_path.string());
                ImageF depth(ds.width, ds.height, 1);
                for (size_t k = 0; k < pfm.size(); ++k) depth[k] = pfm[k];
                f.depth = std::move(depth);
            }
            f.time = T > 1 ? static_cast<double>(i) / static_cast<double>(T - 1) : 0.0;
            ds.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw DatasetError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    const auto points_path = dir / "init_points.txt";
    if (std::filesystem::exists(points_path)) {
        std::ifstream pin(points_path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(pin, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            double x, y, z, r, g, b;
            if (!(ls >> x >> y >> z >> r >> g >> b))
                throw DatasetError("init_points.txt line " + std::to_string(lineno) +
                                   ": expected 'x y z r g b'");
            ds.init_points.emplace_back(x, y, z);
            ds.init_colors.emplace_back(r, g, b);
        }
    }

    const auto plates_dir = dir / "plates";
    if (std::filesystem::is_directory(plates_dir)) {
        for (size_t i = 0; i < ds.frames.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "%04zu.png", i);
            const auto p = plates_dir / name;
            if (!std::filesystem::exists(p)) break;
            ds.plates.push_back(to_float(read_png(p)));
        }
    }
    return ds;
}

void write_manifest(const std::filesystem::path& path, int width, int height,
                    const std::vector<Camera>& cameras,
                    const std::vector<std::string>& image_files,
                    const std::vector<std::string>& mask_files,
                    const std::vector<std::string>& depth_files,
                    const Eigen::Vector3d* bounds_min, const Eigen::Vector3d* bounds_max) {
    json j;
    j["format"] = "splitgs-dataset";
    j["version"] = 1;
    j["width"] = width;
    j["height"] = height;
    j["frame_count"] = cameras.size();
    if (bounds_min && bounds_max) {
        j["scene_bounds"] = {{"min", {(*bounds_min)[0], (*bounds_min)[1], (*bounds_min)[2]}},
                             {"max", {(*bounds_max)[0], (*bounds_max)[1], (*bounds_max)[2]}}};
    }
    json frames = json::array();
    for (size_t i = 0; i < cameras.size(); ++i) {
        json f;
        f["image"] = image_files[i];
        f["mask"] = mask_files[i];
        if (!depth_files.empty()) f["depth"] = depth_files[i];
        f["camera"] = camera_to_json(cameras[i]);
        frames.push_back(f);
    }
    j["frames"] = frames;

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DatasetError("cannot write manifest: " + path.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace splitgs
