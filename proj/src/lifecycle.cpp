#include "splitgs/lifecycle.hpp"

#include <cmath>

namespace splitgs {

void accumulate_visibility(VisibilityStats& stats, const RenderOutput& render_output,
                           std::span<const double> static_alpha) {
    if (stats.size() != static_alpha.size())
        throw ContractViolationError("accumulate_visibility: stats/alpha length mismatch");
    for (const auto& pg : render_output.per_gaussian) {
        if (pg.source.set != 0) continue;  // dynamic gaussians are not scored
        const size_t i = static_cast<size_t>(pg.source.index);
        if (i >= stats.size())
            throw ContractViolationError("accumulate_visibility: source index out of range");
        if (pg.rendered) {
            stats.records[i].rendered_count += 1;
            stats.records[i].transparency_sum += 1.0 - static_alpha[i];
        }
    }
    for (auto& r : stats.records) r.frames_seen += 1;
}

std::vector<VisibilityScore> visibility_score(const VisibilityStats& stats) {
    std::vector<VisibilityScore> out;
    out.reserve(stats.size());
    for (const auto& r : stats.records) {
        VisibilityScore s;
        if (r.frames_seen > 0) {
            s.vbar = r.transparency_sum / static_cast<double>(r.frames_seen);
            s.freq = static_cast<double>(r.rendered_count) / static_cast<double>(r.frames_seen);
        }
        out.push_back(s);
    }
    return out;
}

PruneReport prune_static(StaticSet& set, const VisibilityStats& stats, const PruneConfig& cfg) {
    if (stats.size() != set.size())
        throw ContractViolationError("prune_static: stats do not cover the static set");
    const auto scores = visibility_score(stats);

    PruneReport report;
    report.keep_mask.assign(set.size(), 1);
    for (size_t i = 0; i < set.size(); ++i) {
        if (stats.records[i].frames_seen == 0) continue;  // no evidence yet
        const auto& s = scores[i];
        bool remove = false;
        if (cfg.enable_frequency_rule && s.freq < cfg.min_render_frequency) remove = true;
        if (!remove && cfg.enable_transparency_rule && s.freq >= cfg.min_render_frequency) {
            const double mean_transparency = s.freq > 0 ? s.vbar / s.freq : 0.0;
            if (mean_transparency > cfg.max_mean_transparency) remove = true;
        }
        if (remove) {
            report.keep_mask[i] = 0;
            report.removed.push_back({i, s.vbar, s.freq});
        }
    }
    report.survivors = set.size() - report.removed.size();
    const size_t min_keep = std::max<size_t>(1, set.size() / 100);
    if (set.size() > 0 && report.survivors < min_keep)
        throw PruneGuardError("prune_static: rule would remove " +
                              std::to_string(report.removed.size()) + " of " +
                              std::to_string(set.size()) + " gaussians");
    if (!report.removed.empty()) set.cloud.keep(report.keep_mask);
    return report;
}

DensifyReport densify(GaussianCloud& cloud, const DensifyStats& stats, const DensifyConfig& cfg) {
    if (stats.grad_norm_sum.size() != cloud.size())
        throw ContractViolationError("densify: stats do not cover the cloud");
    const size_t n = cloud.size();

    DensifyReport report;
    report.keep_mask.assign(n, 1);

    std::vector<size_t> clone_parents, split_parents;
    for (size_t i = 0; i < n; ++i) {
        if (stats.grad_count[i] == 0) continue;
        const double mean_grad = stats.grad_norm_sum[i] / static_cast<double>(stats.grad_count[i]);
        if (mean_grad <= cfg.grad_threshold) continue;
        const double max_scale = cloud.log_scale[i].array().exp().maxCoeff();
        if (max_scale > cfg.size_threshold)
            split_parents.push_back(i);
        else
            clone_parents.push_back(i);
    }

    const size_t grow = clone_parents.size() + split_parents.size();
    if (grow == 0) return report;
    if (n + grow > cfg.max_gaussians) {
        log_warn("densify: gaussian budget " + std::to_string(cfg.max_gaussians) +
                 " would be exceeded, skipping");
        report.skipped_budget = true;
        return report;
    }

    // Clones are exact copies of the parent.
    for (size_t p : clone_parents) {
        cloud.append_row_copy(p);
        report.cloned.push_back(p);
        report.appended += 1;
    }

    // Splits: two children straddling the parent along its major axis, both
    // shrunk by split_scale_shrink; the parent row is removed afterwards.
    for (size_t p : split_parents) {
        const Eigen::Vector3d s = cloud.log_scale[p].array().exp();
        int major = 0;
        s.maxCoeff(&major);
        const Eigen::Matrix3d r = quat_to_rotation(cloud.rotation[p]);
        const Eigen::Vector3d axis = r.col(major);
        const double step = 0.5 * s[major];
        const Eigen::Vector3d lsnew =
            (s / cfg.split_scale_shrink).array().log().matrix();
        for (int child = 0; child < 2; ++child) {
            cloud.append_row_copy(p);
            const size_t row = cloud.size() - 1;
            cloud.center[row] = cloud.center[p] + (child == 0 ? step : -step) * axis;
            cloud.log_scale[row] = lsnew;
            if (cfg.reset_opacity) cloud.opacity_logit[row] = cfg.reset_opacity_logit;
            report.appended += 1;
        }
        report.keep_mask[p] = 0;
        report.split.push_back(p);
    }

    if (!split_parents.empty()) {
        // keep() must also cover the appended rows.
        std::vector<char> full = report.keep_mask;
        full.resize(cloud.size(), 1);
        cloud.keep(full);
    }
    return report;
}

}  // namespace splitgs
