#include "splitgs/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "splitgs/image_io.hpp"

namespace splitgs {

namespace {

constexpr double kShDc = 0.28209479177387814;

double logit(double p) { return std::log(p / (1.0 - p)); }

/// Smooth seeded color field over (u, v) in [0,1]^2.
struct TextureField {
    double ax[3], ay[3], px[3], py[3];

    explicit TextureField(std::mt19937_64& rng) {
        std::uniform_real_distribution<double> freq(1.5, 4.5);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        for (int c = 0; c < 3; ++c) {
            ax[c] = freq(rng);
            ay[c] = freq(rng);
            px[c] = phase(rng);
            py[c] = phase(rng);
        }
    }

    Eigen::Vector3d color(double u, double v) const {
        Eigen::Vector3d rgb;
        for (int c = 0; c < 3; ++c)
            rgb[c] = 0.5 + 0.22 * std::sin(ax[c] * u * 2 * std::numbers::pi + px[c]) +
                     0.16 * std::cos(ay[c] * v * 2 * std::numbers::pi + py[c]);
        return rgb.cwiseMax(0.08).cwiseMin(0.92);
    }
};

void set_dc_color(GaussianCloud& cloud, size_t row, const Eigen::Vector3d& rgb) {
    const int coeffs = sh_coeff_count(cloud.sh_degree);
    for (int c = 0; c < 3; ++c)
        cloud.sh(static_cast<Eigen::Index>(row), c * coeffs) = rgb[c] / kShDc;
}

Eigen::Vector3d dc_color(const GaussianCloud& cloud, size_t row) {
    const int coeffs = sh_coeff_count(cloud.sh_degree);
    Eigen::Vector3d rgb;
    for (int c = 0; c < 3; ++c)
        rgb[c] = cloud.sh(static_cast<Eigen::Index>(row), c * coeffs) * kShDc;
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<RenderReadyGaussian> project_cloud(const GaussianCloud& cloud, const Camera& cam,
                                               int32_t set_tag) {
    Scene tmp;
    tmp.static_set.cloud = cloud;
    SceneEvalOptions opts;
    opts.apply_static_app = false;
    opts.apply_dynamic_app = false;
    auto list = scene_at(tmp, 0.0, cam, RenderSelection::kStaticOnly, opts);
    for (auto& g : list) g.source.set = set_tag;
    return list;
}

}  // namespace

Eigen::Vector3d GroundTruthScene::blob_offset(double t) const {
    const double phi = 2.0 * std::numbers::pi * path_turns * t;
    return {path_radius_x * (std::cos(phi) - 1.0), path_radius_y * std::sin(phi), 0.0};
}

GaussianCloud GroundTruthScene::blob_at(double t) const {
    GaussianCloud moved = blob;
    const Eigen::Vector3d off = blob_offset(t);
    for (auto& c : moved.center) c += off;
    return moved;
}

GroundTruthScene make_ground_truth(const SynthSpec& spec, uint64_t seed) {
    std::mt19937_64 rng(seed);
    GroundTruthScene gt;
    gt.backdrop.sh_degree = 1;
    gt.blob.sh_degree = 1;
    const int coeffs = sh_coeff_count(1);

    TextureField wall_tex(rng);
    TextureField floor_tex(rng);
    std::uniform_real_distribution<double> band1(-0.03, 0.03);

    auto add_surface_gaussian = [&](GaussianCloud& cloud, const Eigen::Vector3d& pos,
                                    const Eigen::Vector3d& rgb, const Eigen::Vector3d& log_s,
                                    double alpha) {
        const size_t row = cloud.size();
        cloud.center.push_back(pos);
        cloud.rotation.push_back(Eigen::Vector4d(1, 0, 0, 0));
        cloud.log_scale.push_back(log_s);
        cloud.opacity_logit.push_back(logit(alpha));
        cloud.sh.conservativeResize(cloud.sh.rows() + 1, 3 * coeffs);
        cloud.sh.row(cloud.sh.rows() - 1).setZero();
        set_dc_color(cloud, row, rgb);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < coeffs; ++k)
                cloud.sh(static_cast<Eigen::Index>(row), c * coeffs + k) = band1(rng);
    };

    // Wall: plane z = 2.0, spanning x in [-1.35, 1.35], y in [-1.0, 1.0].
    {
        const int nx = spec.wall_grid;
        const int ny = std::max(2, (spec.wall_grid * 3) / 4);
        const double x0 = -1.35, x1 = 1.35, y0 = -1.0, y1 = 1.0;
        const double dx = (x1 - x0) / (nx - 1);
        const double sigma = 0.75 * dx;
        const Eigen::Vector3d log_s(std::log(sigma), std::log(sigma), std::log(sigma / 6.0));
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const double u = static_cast<double>(ix) / (nx - 1);
                const double v = static_cast<double>(iy) / (ny - 1);
                const Eigen::Vector3d pos(x0 + u * (x1 - x0), y0 + v * (y1 - y0), 2.0);
                add_surface_gaussian(gt.backdrop, pos, wall_tex.color(u, v), log_s, 0.98);
            }
    }

    // Floor: plane y = +1.0 (y points down), z in [1.0, 2.0].
    {
        const int nx = spec.floor_grid;
        const int nz = spec.floor_grid;
        const double x0 = -1.35, x1 = 1.35, z0 = 1.05, z1 = 2.0;
        const double dx = (x1 - x0) / (nx - 1);
        const double sigma = 0.8 * dx;
        const Eigen::Vector3d log_s(std::log(sigma), std::log(sigma / 6.0), std::log(sigma));
        for (int iz = 0; iz < nz; ++iz)
            for (int ix = 0; ix < nx; ++ix) {
                const double u = static_cast<double>(ix) / (nx - 1);
                const double v = static_cast<double>(iz) / (nz - 1);
                const Eigen::Vector3d pos(x0 + u * (x1 - x0), 1.0, z0 + v * (z1 - z0));
                add_surface_gaussian(gt.backdrop, pos, floor_tex.color(u, v), log_s, 0.98);
            }
    }

    // Blob: colored splats in a small ball, orbiting per blob_offset().
    {
        gt.blob_center = Eigen::Vector3d(0.42, -0.05, 1.45);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        std::uniform_real_distribution<double> rdist(0.7, 1.0);
        std::uniform_real_distribution<double> gdist(0.25, 0.6);
        std::uniform_real_distribution<double> bdist(0.05, 0.3);
        const double sigma = spec.blob_radius * 0.45;
        const Eigen::Vector3d log_s = Eigen::Vector3d::Constant(std::log(sigma));
        int placed = 0;
        while (placed < spec.blob_count) {
            Eigen::Vector3d p(unit(rng), unit(rng), unit(rng));
            if (p.norm() > 1.0) continue;
            const Eigen::Vector3d pos = gt.blob_center + spec.blob_radius * p;
            const Eigen::Vector3d rgb(rdist(rng), gdist(rng), bdist(rng));
            add_surface_gaussian(gt.blob, pos, rgb, log_s, 0.92);
            ++placed;
        }
    }
    return gt;
}

Camera synth_camera(const SynthSpec& spec, double t) {
    const double angle = (t - 0.5) * (22.0 * std::numbers::pi / 180.0);
    const Eigen::Vector3d pivot(0.0, 0.0, 1.55);
    const double radius = 1.55;
    const Eigen::Vector3d eye(pivot.x() + radius * std::sin(angle), -0.12,
                              pivot.z() - radius * std::cos(angle));
    return Camera::look_at(eye, pivot, Eigen::Vector3d(0, -1, 0), spec.focal, spec.focal,
                           spec.width, spec.height, 0.05, 12.0);
}

void synth_scene(const SynthSpec& spec, uint64_t seed, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "frames");
    fs::create_directories(out_dir / "masks");
    fs::create_directories(out_dir / "plates");
    if (spec.write_depth) fs::create_directories(out_dir / "depth");

    const GroundTruthScene gt = make_ground_truth(spec, seed);
    RasterOptions ropts;  // double precision, deterministic

    std::vector<Camera> cameras;
    std::vector<std::string> image_files, mask_files, depth_files;
    const int T = spec.frame_count;

    for (int i = 0; i < T; ++i) {
        const double t = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
        const Camera cam = synth_camera(spec, t);
        cameras.push_back(cam);

        GaussianCloud blob = gt.blob_at(t);
        GaussianCloud full = gt.backdrop;
        for (size_t k = 0; k < blob.size(); ++k) {
            full.center.push_back(blob.center[k]);
            full.rotation.push_back(blob.rotation[k]);
            full.log_scale.push_back(blob.log_scale[k]);
            full.opacity_logit.push_back(blob.opacity_logit[k]);
            full.sh.conservativeResize(full.sh.rows() + 1, Eigen::NoChange);
            full.sh.row(full.sh.rows() - 1) = blob.sh.row(static_cast<Eigen::Index>(k));
        }

        const auto full_list = project_cloud(full, cam, 0);
        const auto plate_list = project_cloud(gt.backdrop, cam, 0);
        const auto blob_list = project_cloud(blob, cam, 1);

        const Eigen::Vector3d black = Eigen::Vector3d::Zero();
        RenderOutput full_out = render(full_list, cam, black, ropts);
        RenderOutput plate_out = render(plate_list, cam, black, ropts);
        RenderOutput blob_out = render(blob_list, cam, black, ropts);

        char name[32];
        std::snprintf(name, sizeof(name), "%04d.png", i);
        char pfm_name[32];
        std::snprintf(pfm_name, sizeof(pfm_name), "%04d.pfm", i);

        write_png(out_dir / "frames" / name, to_u8(full_out.color));
        write_png(out_dir / "plates" / name, to_u8(plate_out.color));

        // Mask: static (255) wherever the blob footprint is below threshold.
        ImageU8 mask(spec.width, spec.height, 1);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                mask.at(x, y) = blob_out.accum_alpha.at(x, y) > spec.mask_threshold ? 0 : 255;
        write_png(out_dir / "masks" / name, mask);

        if (spec.write_depth) {
            Image<float> depth(spec.width, spec.height, 1);
            for (size_t k = 0; k < depth.size(); ++k)
                depth[k] = static_cast<float>(full_out.depth[k]);
            write_pfm(out_dir / "depth" / pfm_name, depth);
            depth_files.push_back(std::string("depth/") + pfm_name);
        }
        image_files.push_back(std::string("frames/") + name);
        mask_files.push_back(std::string("masks/") + name);
    }

    const Eigen::Vector3d bmin(-1.6, -1.3, 0.7);
    const Eigen::Vector3d bmax(1.6, 1.3, 2.3);
    write_manifest(out_dir / "manifest.json", spec.width, spec.height, cameras, image_files,
                   mask_files, depth_files, &bmin, &bmax);

    // Initialization points sampled from the ground-truth surfaces.
    {
        const auto tmp = out_dir / "init_points.txt.tmp";
        std::ofstream out(tmp);
        out.precision(10);
        auto dump = [&](const GaussianCloud& cloud) {
            for (size_t i = 0; i < cloud.size(); ++i) {
                const Eigen::Vector3d c = dc_color(cloud, i);
                out << cloud.center[i].x() << " " << cloud.center[i].y() << " "
                    << cloud.center[i].z() << " " << c.x() << " " << c.y() << " " << c.z() << "\n";
            }
        };
        dump(gt.backdrop);
        dump(gt.blob);  // canonical (t = 0) pose
        out.close();
        std::filesystem::rename(tmp, out_dir / "init_points.txt");
    }
}

}  // namespace splitgs
