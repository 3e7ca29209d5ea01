#include "splitgs/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <sstream>

namespace splitgs {

using nlohmann::json;

namespace {

const char* phase_name(TrainPhase p) {
    switch (p) {
        case TrainPhase::kDap: return "dap";
        case TrainPhase::kStage1: return "s1";
        case TrainPhase::kStage2: return "s2";
        case TrainPhase::kDone: return "done";
        default: return "none";
    }
}

/// Unmasked photometric term: L1 + lambda_ssim * (1-SSIM)/2.
double photometric_backward(const ImageF& pred, const ImageF& gt, const LossWeights& weights,
                            double upstream, ImageF& dL_dpred) {
    ImageF ones(pred.width(), pred.height(), 1, 1.0);
    const double l1 = l1_masked_backward(pred, gt, ones, false, upstream, dL_dpred);
    const double s = ssim_backward(pred, gt, upstream * weights.lambda_ssim * -0.5, dL_dpred);
    return l1 + weights.lambda_ssim * (1.0 - s) / 2.0;
}

double knn3_mean_distance(const std::vector<Eigen::Vector3d>& pts, size_t i) {
    double best[3] = {1e30, 1e30, 1e30};
    for (size_t j = 0; j < pts.size(); ++j) {
        if (j == i) continue;
        const double d2 = (pts[j] - pts[i]).squaredNorm();
        if (d2 < best[0]) {
            best[2] = best[1];
            best[1] = best[0];
            best[0] = d2;
        } else if (d2 < best[1]) {
            best[2] = best[1];
            best[1] = d2;
        } else if (d2 < best[2]) {
            best[2] = d2;
        }
    }
    double sum = 0;
    int n = 0;
    for (double b : best)
        if (b < 1e29) {
            sum += std::sqrt(b);
            ++n;
        }
    return n > 0 ? sum / n : 0.1;
}

constexpr double kShDc = 0.28209479177387814;

}  // namespace

Scene init_scene(const Dataset& dataset, const TrainConfig& cfg) {
    Scene scene;
    scene.encoding = cfg.encoding;
    scene.encoding.validate();
    scene.background = Eigen::Vector3d::Zero();
    scene.static_set.cloud.sh_degree = cfg.sh_degree;
    scene.dynamic_set.cloud.sh_degree = cfg.sh_degree;
    scene.dynamic_set.use_app_mlp = cfg.enable_dynamic_app;

    std::vector<Eigen::Vector3d> points = dataset.init_points;
    std::vector<Eigen::Vector3d> colors = dataset.init_colors;
    if (points.empty()) {
        // No point file: uniform seeding inside the scene bounds.
        std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const size_t count = 4000;
        for (size_t i = 0; i < count; ++i) {
            Eigen::Vector3d p;
            for (int a = 0; a < 3; ++a)
                p[a] = dataset.bounds_min[a] +
                       u01(rng) * (dataset.bounds_max[a] - dataset.bounds_min[a]);
            points.push_back(p);
            colors.emplace_back(0.5, 0.5, 0.5);
        }
    }

    // Assign each point by how often it lands in the dynamic mask region.
    std::vector<char> is_dynamic(points.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        int visible = 0, dynamic_hits = 0;
        for (const auto& frame : dataset.frames) {
            auto proj = project_point(frame.camera, points[i]);
            if (!proj) continue;
            const int px = static_cast<int>(std::floor(proj->screen.x()));
            const int py = static_cast<int>(std::floor(proj->screen.y()));
            if (px < 0 || py < 0 || px >= dataset.width || py >= dataset.height) continue;
            ++visible;
            if (frame.mask.at(px, py) == 0.0) ++dynamic_hits;
        }
        if (visible > 0 &&
            static_cast<double>(dynamic_hits) / visible >= cfg.init_dynamic_fraction)
            is_dynamic[i] = 1;
    }

    const double opacity_logit = std::log(cfg.init_opacity / (1.0 - cfg.init_opacity));
    const int coeffs = sh_coeff_count(cfg.sh_degree);
    auto seed_cloud = [&](GaussianCloud& cloud, bool want_dynamic) {
        std::vector<size_t> rows;
        for (size_t i = 0; i < points.size(); ++i)
            if (static_cast<bool>(is_dynamic[i]) == want_dynamic) rows.push_back(i);
        cloud.resize(rows.size());
        for (size_t r = 0; r < rows.size(); ++r) {
            const size_t i = rows[r];
            cloud.center[r] = points[i];
            cloud.rotation[r] = Eigen::Vector4d(1, 0, 0, 0);
            const double d = std::max(1e-4, knn3_mean_distance(points, i));
            cloud.log_scale[r] = Eigen::Vector3d::Constant(std::log(d));
            cloud.opacity_logit[r] = opacity_logit;
            for (int c = 0; c < 3; ++c)
                cloud.sh(static_cast<Eigen::Index>(r), c * coeffs) =
                    std::clamp(colors[i][c], 0.0, 1.0) / kShDc;
        }
    };
    seed_cloud(scene.static_set.cloud, false);
    seed_cloud(scene.dynamic_set.cloud, true);

    scene.init_mlps(cfg.mlp_hidden, cfg.mlp_depth, cfg.seed);
    return scene;
}

Trainer::Trainer(const Dataset& dataset, const TrainConfig& cfg)
    : dataset_(dataset), cfg_(cfg), optimizer_(cfg.adam), rng_(cfg.seed) {
    if (cfg_.loss.depth_decay_steps <= 0)
        cfg_.loss.depth_decay_steps = std::max<int64_t>(1, cfg_.dap_iterations);
    scene_ = init_scene(dataset, cfg_);
    grads_ = SceneGrads::zeros_like(scene_);
    lr_ = cfg_.resolved_lr();
    ensure_stat_sizes();
}

Trainer::Trainer(const Dataset& dataset, const Checkpoint& ckpt)
    : dataset_(dataset), cfg_(ckpt.config), optimizer_(ckpt.config.adam), rng_(ckpt.config.seed) {
    scene_ = ckpt.scene;
    optimizer_.slots() = ckpt.adam;
    phase_ = ckpt.phase;
    phase_step_ = ckpt.phase_step;
    global_step_ = ckpt.global_step;
    depth_align_.scale = ckpt.depth_align_scale;
    depth_align_.offset = ckpt.depth_align_offset;
    depth_align_done_ = ckpt.depth_align_done;
    if (!ckpt.rng_state.empty()) {
        std::istringstream in(ckpt.rng_state);
        in >> rng_;
    }
    grads_ = SceneGrads::zeros_like(scene_);
    lr_ = cfg_.resolved_lr();
    ensure_stat_sizes();
}

void Trainer::ensure_stat_sizes() {
    visibility_.records.resize(scene_.static_set.size());
    densify_static_.resize(scene_.static_set.size());
    densify_dynamic_.resize(scene_.dynamic_set.size());
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint ckpt;
    ckpt.config = cfg_;
    ckpt.scene = scene_;
    ckpt.adam = optimizer_.slots();
    ckpt.phase = phase_;
    ckpt.phase_step = phase_step_;
    ckpt.global_step = global_step_;
    std::ostringstream rs;
    rs << rng_;
    ckpt.rng_state = rs.str();
    ckpt.depth_align_scale = depth_align_.scale;
    ckpt.depth_align_offset = depth_align_.offset;
    ckpt.depth_align_done = depth_align_done_;
    for (const auto& frame : dataset_.frames) {
        ckpt.camera_times.push_back(frame.time);
        ckpt.cameras.push_back(frame.camera);
    }
    return ckpt;
}

// ---------------------------------------------------------------- steps --

double Trainer::step_dap(const Frame& frame) {
    SceneEvalOptions opts;
    opts.apply_static_app = false;
    opts.apply_dynamic_app = false;
    opts.dilation = cfg_.dilation;
    SceneEvalCache cache;
    auto list = scene_forward(scene_, frame.time, frame.camera, RenderSelection::kStaticOnly, opts,
                              &cache);
    ForwardState fs;
    RenderOutput out = render(list, frame.camera, scene_.background, cfg_.raster_options(true), &fs);

    ImageF dcolor(dataset_.width, dataset_.height, 3);
    const double ls = static_loss_backward(out.color, frame.image, frame.mask, cfg_.loss, 1.0, dcolor);
    double ld = 0;
    ImageF ddepth;
    if (frame.depth) {
        ddepth = ImageF(dataset_.width, dataset_.height, 1);
        ld = depth_loss_backward(out.depth, *frame.depth, frame.mask, phase_step_, cfg_.loss,
                                 depth_align_.scale, depth_align_.offset, 1.0, ddepth);
    }
    auto splat_grads = render_backward(list, fs, dcolor, frame.depth ? &ddepth : nullptr);
    grads_.set_zero();
    scene_backward(scene_, cache, splat_grads, grads_);

    last_rec_.loss_static = ls;
    last_rec_.loss_depth = ld;
    last_rec_.loss_dynamic = 0;
    last_rec_.loss_joint = 0;
    return ls + ld;
}

double Trainer::step_stage1(const Frame& frame) {
    SceneEvalOptions opts;
    opts.apply_static_app = false;
    opts.apply_dynamic_app = false;
    opts.dilation = cfg_.dilation;
    SceneEvalCache cache;
    auto list =
        scene_forward(scene_, frame.time, frame.camera, RenderSelection::kBoth, opts, &cache);

    std::vector<RenderReadyGaussian> static_list, dyn_list;
    std::vector<size_t> static_pos, dyn_pos;
    for (size_t i = 0; i < list.size(); ++i) {
        if (list[i].source.set == 0) {
            static_list.push_back(list[i]);
            static_pos.push_back(i);
        } else {
            dyn_list.push_back(list[i]);
            dyn_pos.push_back(i);
        }
    }

    const RasterOptions ropts = cfg_.raster_options(true);
    ForwardState fs_s, fs_d;
    RenderOutput out_s = render(static_list, frame.camera, scene_.background, ropts, &fs_s);
    RenderOutput out_d =
        render(dyn_list, frame.camera, Eigen::Vector3d::Zero(), ropts, &fs_d);

    ImageF dcolor_s(dataset_.width, dataset_.height, 3);
    ImageF dcolor_d(dataset_.width, dataset_.height, 3);
    const double ls =
        static_loss_backward(out_s.color, frame.image, frame.mask, cfg_.loss, 1.0, dcolor_s);
    const double ldyn =
        dynamic_loss_backward(out_d.color, frame.image, frame.mask, cfg_.loss, 1.0, dcolor_d);

    auto sg_s = render_backward(static_list, fs_s, dcolor_s);
    auto sg_d = render_backward(dyn_list, fs_d, dcolor_d);

    std::vector<SplatGrads> total(list.size());
    for (size_t k = 0; k < static_pos.size(); ++k) total[static_pos[k]] = sg_s[k];
    for (size_t k = 0; k < dyn_pos.size(); ++k) total[dyn_pos[k]] = sg_d[k];

    grads_.set_zero();
    scene_backward(scene_, cache, total, grads_);

    accumulate_visibility(visibility_, out_s, cache.static_alpha);
    for (size_t i = 0; i < cache.static_pg.size(); ++i) {
        const auto li = cache.static_pg[i].list_index;
        if (li < 0) continue;
        densify_static_.grad_norm_sum[i] += total[static_cast<size_t>(li)].screen.norm();
        densify_static_.grad_count[i] += 1;
    }
    for (size_t i = 0; i < cache.dyn_pg.size(); ++i) {
        const auto li = cache.dyn_pg[i].list_index;
        if (li < 0) continue;
        densify_dynamic_.grad_norm_sum[i] += total[static_cast<size_t>(li)].screen.norm();
        densify_dynamic_.grad_count[i] += 1;
    }

    last_rec_.loss_static = ls;
    last_rec_.loss_dynamic = ldyn;
    last_rec_.loss_joint = 0;
    last_rec_.loss_depth = 0;
    return ls + ldyn;
}

double Trainer::step_stage2(const Frame& frame) {
    SceneEvalOptions opts;
    opts.apply_static_app = cfg_.enable_static_app;
    opts.apply_dynamic_app = cfg_.enable_dynamic_app;
    opts.dilation = cfg_.dilation;
    SceneEvalCache cache;
    auto list =
        scene_forward(scene_, frame.time, frame.camera, RenderSelection::kBoth, opts, &cache);

    std::vector<RenderReadyGaussian> static_list, dyn_list;
    std::vector<size_t> static_pos, dyn_pos;
    for (size_t i = 0; i < list.size(); ++i) {
        if (list[i].source.set == 0) {
            static_list.push_back(list[i]);
            static_pos.push_back(i);
        } else {
            dyn_list.push_back(list[i]);
            dyn_pos.push_back(i);
        }
    }

    const RasterOptions ropts = cfg_.raster_options(true);
    ForwardState fs_j, fs_s, fs_d;
    RenderOutput out_j = render(list, frame.camera, scene_.background, ropts, &fs_j);
    RenderOutput out_s = render(static_list, frame.camera, scene_.background, ropts, &fs_s);
    RenderOutput out_d = render(dyn_list, frame.camera, Eigen::Vector3d::Zero(), ropts, &fs_d);

    ImageF dcolor_j(dataset_.width, dataset_.height, 3);
    ImageF dcolor_s(dataset_.width, dataset_.height, 3);
    ImageF dcolor_d(dataset_.width, dataset_.height, 3);
    const double lj =
        photometric_backward(out_j.color, frame.image, cfg_.loss, cfg_.loss.w_joint, dcolor_j);
    const double ls = static_loss_backward(out_s.color, frame.image, frame.mask, cfg_.loss,
                                           cfg_.loss.w_static, dcolor_s);
    const double ldyn = dynamic_loss_backward(out_d.color, frame.image, frame.mask, cfg_.loss,
                                              cfg_.loss.w_dyn, dcolor_d);

    auto sg_j = render_backward(list, fs_j, dcolor_j);
    auto sg_s = render_backward(static_list, fs_s, dcolor_s);
    auto sg_d = render_backward(dyn_list, fs_d, dcolor_d);

    std::vector<SplatGrads> total = std::move(sg_j);
    auto add = [](SplatGrads& dst, const SplatGrads& src) {
        dst.screen += src.screen;
        dst.cov2 += src.cov2;
        dst.rgb += src.rgb;
        dst.alpha += src.alpha;
        dst.depth += src.depth;
    };
    for (size_t k = 0; k < static_pos.size(); ++k) add(total[static_pos[k]], sg_s[k]);
    for (size_t k = 0; k < dyn_pos.size(); ++k) add(total[dyn_pos[k]], sg_d[k]);

    grads_.set_zero();
    scene_backward(scene_, cache, total, grads_);

    for (size_t i = 0; i < cache.dyn_pg.size(); ++i) {
        const auto li = cache.dyn_pg[i].list_index;
        if (li < 0) continue;
        densify_dynamic_.grad_norm_sum[i] += total[static_cast<size_t>(li)].screen.norm();
        densify_dynamic_.grad_count[i] += 1;
    }

    last_rec_.loss_static = ls;
    last_rec_.loss_dynamic = ldyn;
    last_rec_.loss_joint = lj;
    last_rec_.loss_depth = 0;
    return cfg_.loss.w_joint * lj + cfg_.loss.w_static * ls + cfg_.loss.w_dyn * ldyn;
}

// ------------------------------------------------------------- training --

std::vector<Trainer::ParamView> Trainer::trainable_params(TrainPhase phase) {
    std::vector<ParamView> views;
    auto add_cloud = [&](const std::string& prefix, GaussianCloud& cloud, CloudGrads& g) {
        if (cloud.size() == 0) return;
        views.push_back({prefix + ".center", cloud.center.data()->data(),
                         g.center.data()->data(), 3 * cloud.size(), 3});
        views.push_back({prefix + ".rotation", cloud.rotation.data()->data(),
                         g.rotation.data()->data(), 4 * cloud.size(), 4});
        views.push_back({prefix + ".log_scale", cloud.log_scale.data()->data(),
                         g.log_scale.data()->data(), 3 * cloud.size(), 3});
        views.push_back({prefix + ".opacity_logit", cloud.opacity_logit.data(),
                         g.opacity_logit.data(), cloud.size(), 1});
        views.push_back({prefix + ".sh", cloud.sh.data(), g.sh.data(),
                         static_cast<size_t>(cloud.sh.size()),
                         static_cast<size_t>(cloud.sh.cols())});
    };
    auto add_mlp = [&](const std::string& prefix, Mlp& net, MlpGrads& g) {
        for (size_t l = 0; l < net.weights.size(); ++l) {
            views.push_back({prefix + ".w" + std::to_string(l), net.weights[l].data(),
                             g.weights[l].data(), static_cast<size_t>(net.weights[l].size()), 0});
            views.push_back({prefix + ".b" + std::to_string(l), net.biases[l].data(),
                             g.biases[l].data(), static_cast<size_t>(net.biases[l].size()), 0});
        }
    };

    if (phase == TrainPhase::kDap) {
        add_cloud("static", scene_.static_set.cloud, grads_.static_cloud);
    } else if (phase == TrainPhase::kStage1) {
        add_cloud("static", scene_.static_set.cloud, grads_.static_cloud);
        add_cloud("dynamic", scene_.dynamic_set.cloud, grads_.dyn_cloud);
        add_mlp("deform_mlp", scene_.dynamic_set.deform_mlp, grads_.deform);
    } else if (phase == TrainPhase::kStage2) {
        if (cfg_.enable_static_app)
            add_mlp("static_app_mlp", scene_.static_set.app_mlp, grads_.static_app);
        add_cloud("dynamic", scene_.dynamic_set.cloud, grads_.dyn_cloud);
        add_mlp("deform_mlp", scene_.dynamic_set.deform_mlp, grads_.deform);
        if (cfg_.enable_dynamic_app && scene_.dynamic_set.use_app_mlp)
            add_mlp("dyn_app_mlp", scene_.dynamic_set.app_mlp, grads_.dyn_app);
    }
    return views;
}

void Trainer::apply_gradients(TrainPhase phase) {
    const double lr = lr_at(lr_, std::min(global_step_, lr_.total_steps));
    last_rec_.lr = lr;
    for (auto& view : trainable_params(phase)) {
        if (view.count == 0) continue;
        optimizer_.step(view.name, view.data, view.grad, view.count, lr);
    }
}

void Trainer::run_lifecycle(int64_t phase_step) {
    const bool in_s1 = phase_ == TrainPhase::kStage1;
    const bool in_s2 = phase_ == TrainPhase::kStage2;

    // Visibility-driven pruning: Stage I only.
    if (in_s1 && cfg_.enable_vdp && phase_step >= cfg_.prune_warmup &&
        (phase_step - cfg_.prune_warmup) % cfg_.prune_interval == 0 &&
        phase_step > 0 && scene_.static_set.size() > 0) {
        try {
            PruneReport rep = prune_static(scene_.static_set, visibility_, cfg_.prune);
            if (!rep.removed.empty()) {
                optimizer_.prune_rows("static.center", rep.keep_mask, 3);
                optimizer_.prune_rows("static.rotation", rep.keep_mask, 4);
                optimizer_.prune_rows("static.log_scale", rep.keep_mask, 3);
                optimizer_.prune_rows("static.opacity_logit", rep.keep_mask, 1);
                optimizer_.prune_rows("static.sh", rep.keep_mask,
                                      static_cast<size_t>(scene_.static_set.cloud.sh.cols()));
                report_.prune_events.push_back({global_step_, rep.removed.size(), rep.survivors});
            }
            visibility_.records.assign(scene_.static_set.size(), {});
            densify_static_.grad_norm_sum.assign(scene_.static_set.size(), 0.0);
            densify_static_.grad_count.assign(scene_.static_set.size(), 0);
            grads_ = SceneGrads::zeros_like(scene_);
        } catch (const PruneGuardError& e) {
            log_warn(std::string("pruning skipped: ") + e.what());
        }
    }

    // Densification: both sets in Stage I, dynamic only in Stage II.
    if ((in_s1 || in_s2) && phase_step >= cfg_.densify_warmup &&
        (phase_step - cfg_.densify_warmup) % cfg_.densify_interval == 0 && phase_step > 0) {
        auto run_densify = [&](const std::string& prefix, GaussianCloud& cloud,
                               DensifyStats& stats, int32_t tag) {
            if (cloud.size() == 0) return false;
            DensifyReport rep = densify(cloud, stats, cfg_.densify);
            if (rep.appended > 0) {
                const size_t shw = static_cast<size_t>(cloud.sh.cols());
                std::vector<char> full = rep.keep_mask;
                full.resize(full.size() + rep.appended, 1);
                optimizer_.append_rows(prefix + ".center", rep.appended, 3);
                optimizer_.append_rows(prefix + ".rotation", rep.appended, 4);
                optimizer_.append_rows(prefix + ".log_scale", rep.appended, 3);
                optimizer_.append_rows(prefix + ".opacity_logit", rep.appended, 1);
                optimizer_.append_rows(prefix + ".sh", rep.appended, shw);
                optimizer_.prune_rows(prefix + ".center", full, 3);
                optimizer_.prune_rows(prefix + ".rotation", full, 4);
                optimizer_.prune_rows(prefix + ".log_scale", full, 3);
                optimizer_.prune_rows(prefix + ".opacity_logit", full, 1);
                optimizer_.prune_rows(prefix + ".sh", full, shw);
                report_.densify_events.push_back(
                    {global_step_, tag, rep.cloned.size(), rep.split.size()});
                return true;
            }
            return false;
        };
        bool changed = false;
        if (in_s1)
            changed |= run_densify("static", scene_.static_set.cloud, densify_static_, 0);
        changed |= run_densify("dynamic", scene_.dynamic_set.cloud, densify_dynamic_, 1);
        if (changed) {
            grads_ = SceneGrads::zeros_like(scene_);
            visibility_.records.assign(scene_.static_set.size(), {});
        }
        densify_static_.resize(scene_.static_set.size());
        densify_dynamic_.resize(scene_.dynamic_set.size());
        densify_static_.reset();
        densify_dynamic_.reset();
    }
}

void Trainer::record(const IterationRecord& rec) {
    report_.iterations.push_back(rec);
    emit_log(rec);
}

void Trainer::emit_log(const IterationRecord& rec) {
    if (log_line) log_line(iteration_json(rec));
}

void Trainer::train_loop(TrainPhase target, int64_t iterations) {
    if (phase_ != target) {
        phase_ = target;
        phase_step_ = 0;
    }
    if (dataset_.frames.empty()) throw ContractViolationError("train: empty dataset");
    std::uniform_int_distribution<size_t> pick(0, dataset_.frames.size() - 1);
    const auto t0 = std::chrono::steady_clock::now();

    while (phase_step_ < iterations) {
        const Frame& frame = dataset_.frames[pick(rng_)];
        last_rec_ = IterationRecord{};
        double loss = 0;
        switch (phase_) {
            case TrainPhase::kDap: loss = step_dap(frame); break;
            case TrainPhase::kStage1: loss = step_stage1(frame); break;
            case TrainPhase::kStage2: loss = step_stage2(frame); break;
            default: throw ContractViolationError("train_loop: bad phase");
        }
        if (!std::isfinite(loss))
            throw TrainingDivergenceError("training loss is not finite at step " +
                                          std::to_string(global_step_) +
                                          " (resume from the last checkpoint)");
        apply_gradients(phase_);
        ++phase_step_;
        ++global_step_;
        run_lifecycle(phase_step_);

        last_rec_.iter = global_step_;
        last_rec_.phase = phase_;
        last_rec_.total = loss;
        last_rec_.n_static = scene_.static_set.size();
        last_rec_.n_dynamic = scene_.dynamic_set.size();
        record(last_rec_);

        if (on_checkpoint && cfg_.checkpoint_interval > 0 &&
            phase_step_ % cfg_.checkpoint_interval == 0)
            on_checkpoint(make_checkpoint());
    }
    report_.wallclock_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void Trainer::pretrain_dap() {
    if (!dataset_.has_depth()) {
        log_warn("pretrain_dap: dataset has no depth maps, phase skipped");
        if (log_line) log_line(R"({"phase":"dap","skipped":"no depth maps"})");
        if (phase_ == TrainPhase::kNone || phase_ == TrainPhase::kDap) {
            phase_ = TrainPhase::kDap;
            phase_step_ = cfg_.dap_iterations;
        }
        return;
    }
    if (phase_ == TrainPhase::kNone || phase_ != TrainPhase::kDap) {
        // Alignment once at phase start, on the first frame with depth.
        if (!depth_align_done_) {
            for (const auto& frame : dataset_.frames) {
                if (!frame.depth) continue;
                SceneEvalOptions opts;
                opts.apply_static_app = false;
                opts.apply_dynamic_app = false;
                opts.dilation = cfg_.dilation;
                auto list = scene_at(scene_, frame.time, frame.camera,
                                     RenderSelection::kStaticOnly, opts);
                RenderOutput out =
                    render(list, frame.camera, scene_.background, cfg_.raster_options(false));
                depth_align_ = align_depth(out.depth, *frame.depth, frame.mask);
                depth_align_done_ = true;
                break;
            }
        }
    }
    train_loop(TrainPhase::kDap, cfg_.dap_iterations);
}

void Trainer::train_stage1() { train_loop(TrainPhase::kStage1, cfg_.s1_iterations); }

void Trainer::train_stage2() { train_loop(TrainPhase::kStage2, cfg_.s2_iterations); }

void Trainer::run_all() {
    if (phase_ == TrainPhase::kNone) {
        if (cfg_.enable_dap && cfg_.dap_iterations > 0)
            pretrain_dap();
        else if (log_line)
            log_line(R"({"phase":"dap","skipped":"disabled"})");
    } else if (phase_ == TrainPhase::kDap && phase_step_ < cfg_.dap_iterations) {
        pretrain_dap();
    }
    if (phase_ == TrainPhase::kNone || phase_ == TrainPhase::kDap ||
        (phase_ == TrainPhase::kStage1 && phase_step_ < cfg_.s1_iterations))
        train_stage1();
    if (phase_ != TrainPhase::kDone) train_stage2();
    phase_ = TrainPhase::kDone;
}

EvalSummary Trainer::evaluate() const {
    EvalSummary summary;
    SceneEvalOptions opts;
    opts.apply_static_app = cfg_.enable_static_app;
    opts.apply_dynamic_app = cfg_.enable_dynamic_app;
    opts.dilation = cfg_.dilation;
    for (size_t i = 0; i < dataset_.frames.size(); ++i) {
        const Frame& frame = dataset_.frames[i];
        auto list = scene_at(scene_, frame.time, frame.camera, RenderSelection::kBoth, opts);
        RenderOutput out =
            render(list, frame.camera, scene_.background, cfg_.raster_options(false));
        EvalFrameRecord rec;
        rec.frame = i;
        rec.psnr = psnr(out.color, frame.image);
        rec.ssim = ssim(out.color, frame.image);
        summary.mean_psnr += rec.psnr;
        summary.mean_ssim += rec.ssim;
        summary.per_frame.push_back(rec);
    }
    if (!summary.per_frame.empty()) {
        summary.mean_psnr /= static_cast<double>(summary.per_frame.size());
        summary.mean_ssim /= static_cast<double>(summary.per_frame.size());
    }
    return summary;
}

RenderOutput Trainer::render_view(double t, const Camera& cam, RenderSelection which) const {
    SceneEvalOptions opts;
    opts.apply_static_app = cfg_.enable_static_app;
    opts.apply_dynamic_app = cfg_.enable_dynamic_app;
    opts.dilation = cfg_.dilation;
    auto list = scene_at(scene_, t, cam, which, opts);
    const Eigen::Vector3d bg =
        which == RenderSelection::kDynamicOnly ? Eigen::Vector3d::Zero() : scene_.background;
    return render(list, cam, bg, cfg_.raster_options(false));
}

VisibilityStats Trainer::collect_visibility() const {
    VisibilityStats stats;
    stats.resize(scene_.static_set.size());
    SceneEvalOptions opts;
    opts.apply_static_app = cfg_.enable_static_app;
    opts.apply_dynamic_app = false;
    opts.dilation = cfg_.dilation;
    for (const auto& frame : dataset_.frames) {
        SceneEvalCache cache;
        auto list = scene_forward(scene_, frame.time, frame.camera, RenderSelection::kStaticOnly,
                                  opts, &cache);
        RenderOutput out =
            render(list, frame.camera, scene_.background, cfg_.raster_options(false));
        accumulate_visibility(stats, out, cache.static_alpha);
    }
    return stats;
}

std::string iteration_json(const IterationRecord& rec) {
    json j;
    j["iter"] = rec.iter;
    j["phase"] = phase_name(rec.phase);
    j["losses"] = {{"total", rec.total},
                   {"static", rec.loss_static},
                   {"dynamic", rec.loss_dynamic},
                   {"joint", rec.loss_joint},
                   {"depth", rec.loss_depth}};
    j["counts"] = {{"static", rec.n_static}, {"dynamic", rec.n_dynamic}};
    j["lr"] = rec.lr;
    return j.dump();
}

std::string eval_json(const EvalSummary& summary) {
    json j;
    json frames = json::array();
    for (const auto& r : summary.per_frame)
        frames.push_back({{"frame", r.frame}, {"psnr", r.psnr}, {"ssim", r.ssim}});
    j["frames"] = frames;
    j["mean_psnr"] = summary.mean_psnr;
    j["mean_ssim"] = summary.mean_ssim;
    return j.dump(2);
}

}  // namespace splitgs
