#include "splitgs/rasterizer.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace splitgs {

namespace {

/// Run fn(i) for i in [0, count) across a small thread pool.
void parallel_for(int count, int num_threads, const std::function<void(int)>& fn) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    int threads = num_threads > 0 ? num_threads : (hw > 0 ? hw : 1);
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// Per-gaussian data staged in the compute precision.
template <typename T>
struct Prepped {
    std::vector<T> sx, sy;                 // screen center
    std::vector<T> ca, cb, cc;             // conic entries
    std::vector<T> red, green, blue;       // rgb
    std::vector<T> alpha, depth;
    std::vector<char> valid;
    std::vector<int> tx0, tx1, ty0, ty1;   // tile ranges (inclusive-exclusive)
};

template <typename T>
Prepped<T> prepare(const std::vector<RenderReadyGaussian>& gaussians, const Camera& cam,
                   const RasterOptions& opts, std::vector<std::array<double, 3>>& conics_out) {
    const int n = static_cast<int>(gaussians.size());
    const int ts = opts.tile_size;
    const int ntx = (cam.width + ts - 1) / ts;
    const int nty = (cam.height + ts - 1) / ts;
    Prepped<T> p;
    p.sx.resize(n);
    p.sy.resize(n);
    p.ca.resize(n);
    p.cb.resize(n);
    p.cc.resize(n);
    p.red.resize(n);
    p.green.resize(n);
    p.blue.resize(n);
    p.alpha.resize(n);
    p.depth.resize(n);
    p.valid.assign(n, 0);
    p.tx0.resize(n);
    p.tx1.resize(n);
    p.ty0.resize(n);
    p.ty1.resize(n);
    conics_out.assign(n, {std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN()});

    for (int i = 0; i < n; ++i) {
        const auto& g = gaussians[i];
        if (!(g.depth > cam.near) || !(g.alpha > 0.0)) continue;
        const T a = static_cast<T>(g.cov2(0, 0));
        const T b = static_cast<T>(0.5 * (g.cov2(0, 1) + g.cov2(1, 0)));
        const T c = static_cast<T>(g.cov2(1, 1));
        const T det = a * c - b * b;
        if (!(det > T(0)) || !(a > T(0))) continue;  // not positive definite
        const T inv_det = T(1) / det;
        p.ca[i] = c * inv_det;
        p.cb[i] = -b * inv_det;
        p.cc[i] = a * inv_det;
        conics_out[i] = {static_cast<double>(p.ca[i]), static_cast<double>(p.cb[i]),
                         static_cast<double>(p.cc[i])};
        p.sx[i] = static_cast<T>(g.screen.x());
        p.sy[i] = static_cast<T>(g.screen.y());
        p.red[i] = static_cast<T>(g.rgb.x());
        p.green[i] = static_cast<T>(g.rgb.y());
        p.blue[i] = static_cast<T>(g.rgb.z());
        p.alpha[i] = static_cast<T>(g.alpha);
        p.depth[i] = static_cast<T>(g.depth);

        if (opts.extent_sigma > 0.0) {
            const double mid = 0.5 * (static_cast<double>(a) + static_cast<double>(c));
            const double disc = std::sqrt(std::max(
                0.0, 0.25 * std::pow(static_cast<double>(a) - static_cast<double>(c), 2) +
                         static_cast<double>(b) * static_cast<double>(b)));
            const double radius = opts.extent_sigma * std::sqrt(std::max(1e-12, mid + disc));
            const double x0 = g.screen.x() - radius, x1 = g.screen.x() + radius;
            const double y0 = g.screen.y() - radius, y1 = g.screen.y() + radius;
            if (x1 < 0 || y1 < 0 || x0 >= cam.width || y0 >= cam.height) continue;  // off-image
            p.tx0[i] = std::clamp(static_cast<int>(std::floor(x0 / ts)), 0, ntx - 1);
            p.tx1[i] = std::clamp(static_cast<int>(std::floor(x1 / ts)), 0, ntx - 1) + 1;
            p.ty0[i] = std::clamp(static_cast<int>(std::floor(y0 / ts)), 0, nty - 1);
            p.ty1[i] = std::clamp(static_cast<int>(std::floor(y1 / ts)), 0, nty - 1) + 1;
        } else {
            p.tx0[i] = 0;
            p.tx1[i] = ntx;
            p.ty0[i] = 0;
            p.ty1[i] = nty;
        }
        p.valid[i] = 1;
    }
    return p;
}

template <typename T>
struct TileScratch {
    std::vector<double> max_weight;
    std::vector<int32_t> coverage;
};

template <typename T>
RenderOutput render_impl(const std::vector<RenderReadyGaussian>& gaussians, const Camera& cam,
                         const Eigen::Vector3d& background, const RasterOptions& opts,
                         ForwardState* state) {
    if (cam.width <= 0 || cam.height <= 0)
        throw InvalidParameterError("render: zero-sized image");
    const int n = static_cast<int>(gaussians.size());
    const int ts = opts.tile_size;
    const int ntx = (cam.width + ts - 1) / ts;
    const int nty = (cam.height + ts - 1) / ts;
    const int ntiles = ntx * nty;

    std::vector<std::array<double, 3>> conics;
    Prepped<T> prep = prepare<T>(gaussians, cam, opts, conics);

    // Global depth order with index tie-break for determinism.
    std::vector<int32_t> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        if (gaussians[a].depth != gaussians[b].depth) return gaussians[a].depth < gaussians[b].depth;
        return a < b;
    });

    // Bin in sorted order so each tile list is already depth-sorted.
    std::vector<ForwardState::Tile> tiles(ntiles);
    for (int tyi = 0; tyi < nty; ++tyi) {
        for (int txi = 0; txi < ntx; ++txi) {
            auto& tile = tiles[tyi * ntx + txi];
            tile.x0 = txi * ts;
            tile.y0 = tyi * ts;
            tile.w = std::min(ts, cam.width - tile.x0);
            tile.h = std::min(ts, cam.height - tile.y0);
        }
    }
    for (int32_t gid : order) {
        if (!prep.valid[gid]) continue;
        for (int tyi = prep.ty0[gid]; tyi < prep.ty1[gid]; ++tyi)
            for (int txi = prep.tx0[gid]; txi < prep.tx1[gid]; ++txi)
                tiles[tyi * ntx + txi].gauss_ids.push_back(gid);
    }

    RenderOutput out;
    out.color = ImageF(cam.width, cam.height, 3);
    out.depth = ImageF(cam.width, cam.height, 1, cam.far);
    out.accum_alpha = ImageF(cam.width, cam.height, 1, 0.0);
    out.per_gaussian.resize(n);
    for (int i = 0; i < n; ++i) out.per_gaussian[i].source = gaussians[i].source;

    const T bg_r = static_cast<T>(background.x());
    const T bg_g = static_cast<T>(background.y());
    const T bg_b = static_cast<T>(background.z());
    const T t_min = static_cast<T>(opts.transmittance_min);
    const T a_clamp = static_cast<T>(opts.alpha_clamp);
    const double w_eps = opts.weight_epsilon;
    const bool retain = opts.retain_forward && state != nullptr;

    std::vector<TileScratch<T>> scratch(ntiles);

    parallel_for(ntiles, opts.num_threads, [&](int ti) {
        auto& tile = tiles[ti];
        auto& sc = scratch[ti];
        const size_t m = tile.gauss_ids.size();
        sc.max_weight.assign(m, 0.0);
        sc.coverage.assign(m, 0);
        if (retain) {
            tile.offsets.assign(static_cast<size_t>(tile.w) * tile.h + 1, 0);
            tile.entries.clear();
        }
        for (int py = 0; py < tile.h; ++py) {
            for (int px = 0; px < tile.w; ++px) {
                const int ix = tile.x0 + px;
                const int iy = tile.y0 + py;
                const T cx = static_cast<T>(ix) + T(0.5);
                const T cy = static_cast<T>(iy) + T(0.5);
                T trans = T(1);
                T col_r = T(0), col_g = T(0), col_b = T(0);
                T d_sum = T(0);
                for (size_t k = 0; k < m; ++k) {
                    const int32_t gid = tile.gauss_ids[k];
                    const T dx = cx - prep.sx[gid];
                    const T dy = cy - prep.sy[gid];
                    const T q = prep.ca[gid] * dx * dx + T(2) * prep.cb[gid] * dx * dy +
                                prep.cc[gid] * dy * dy;
                    if (q < T(0)) continue;  // numerically indefinite corner
                    const T gval = std::exp(T(-0.5) * q);
                    T w = prep.alpha[gid] * gval;
                    if (w > a_clamp) w = a_clamp;
                    if (!(w > T(0))) continue;
                    const T cw = w * trans;
                    col_r += prep.red[gid] * cw;
                    col_g += prep.green[gid] * cw;
                    col_b += prep.blue[gid] * cw;
                    d_sum += prep.depth[gid] * cw;
                    const double cwd = static_cast<double>(cw);
                    if (cwd > sc.max_weight[k]) sc.max_weight[k] = cwd;
                    if (cwd >= w_eps) sc.coverage[k] += 1;
                    if (retain) tile.entries.push_back({static_cast<int32_t>(k), static_cast<double>(w)});
                    trans *= (T(1) - w);
                    if (trans < t_min) break;
                }
                const T accum = T(1) - trans;
                out.color.at(ix, iy, 0) = static_cast<double>(col_r + bg_r * trans);
                out.color.at(ix, iy, 1) = static_cast<double>(col_g + bg_g * trans);
                out.color.at(ix, iy, 2) = static_cast<double>(col_b + bg_b * trans);
                out.accum_alpha.at(ix, iy) = static_cast<double>(accum);
                if (static_cast<double>(accum) > opts.accum_alpha_min)
                    out.depth.at(ix, iy) = static_cast<double>(d_sum / accum);
                if (retain)
                    tile.offsets[static_cast<size_t>(py) * tile.w + px + 1] =
                        static_cast<int32_t>(tile.entries.size());
            }
        }
        if (retain) {
            // offsets were written as absolute end positions per pixel; fill gaps.
            for (size_t i = 1; i < tile.offsets.size(); ++i)
                if (tile.offsets[i] < tile.offsets[i - 1]) tile.offsets[i] = tile.offsets[i - 1];
        }
    });

    // Ordered merge of per-tile stats keeps results independent of scheduling.
    for (int ti = 0; ti < ntiles; ++ti) {
        const auto& tile = tiles[ti];
        const auto& sc = scratch[ti];
        for (size_t k = 0; k < tile.gauss_ids.size(); ++k) {
            auto& st = out.per_gaussian[tile.gauss_ids[k]];
            st.max_weight = std::max(st.max_weight, sc.max_weight[k]);
            st.coverage += sc.coverage[k];
        }
    }
    for (auto& st : out.per_gaussian) st.rendered = st.coverage > 0;

    if (retain) {
        state->width = cam.width;
        state->height = cam.height;
        state->gaussian_count = gaussians.size();
        state->background = background;
        state->far = cam.far;
        state->options = opts;
        state->tiles = std::move(tiles);
        state->conics = std::move(conics);
        state->valid = true;
    }
    return out;
}

template <typename T>
struct GradAcc {
    T sx = 0, sy = 0;
    T ca = 0, cb = 0, cc = 0;
    T r = 0, g = 0, b = 0;
    T alpha = 0;
    T depth = 0;
};

template <typename T>
std::vector<SplatGrads> backward_impl(const std::vector<RenderReadyGaussian>& gaussians,
                                      const ForwardState& state, const ImageF& dL_dcolor,
                                      const ImageF* dL_ddepth) {
    const int n = static_cast<int>(gaussians.size());
    const RasterOptions& opts = state.options;

    Prepped<T> prep;
    std::vector<std::array<double, 3>> conics_unused;
    {
        Camera cam;
        cam.width = state.width;
        cam.height = state.height;
        cam.far = state.far;
        cam.near = 0.0;
        cam.fx = cam.fy = 1.0;
        prep = prepare<T>(gaussians, cam, opts, conics_unused);
    }

    const int ntiles = static_cast<int>(state.tiles.size());
    std::vector<std::vector<GradAcc<T>>> local(ntiles);

    const T bg_r = static_cast<T>(state.background.x());
    const T bg_g = static_cast<T>(state.background.y());
    const T bg_b = static_cast<T>(state.background.z());

    parallel_for(ntiles, opts.num_threads, [&](int ti) {
        const auto& tile = state.tiles[ti];
        auto& acc = local[ti];
        acc.assign(tile.gauss_ids.size(), {});
        std::vector<T> tvals;  // transmittance before each contribution
        for (int py = 0; py < tile.h; ++py) {
            for (int px = 0; px < tile.w; ++px) {
                const size_t pix = static_cast<size_t>(py) * tile.w + px;
                const int32_t e0 = tile.offsets[pix];
                const int32_t e1 = tile.offsets[pix + 1];
                if (e0 == e1 && !dL_ddepth) {
                    // Background-only pixel: nothing differentiable.
                    continue;
                }
                const int ix = tile.x0 + px;
                const int iy = tile.y0 + py;
                const T gC[3] = {static_cast<T>(dL_dcolor.at(ix, iy, 0)),
                                 static_cast<T>(dL_dcolor.at(ix, iy, 1)),
                                 static_cast<T>(dL_dcolor.at(ix, iy, 2))};
                const T gD = dL_ddepth ? static_cast<T>(dL_ddepth->at(ix, iy)) : T(0);

                // Reconstruct the transmittance chain.
                const int count = e1 - e0;
                tvals.resize(count + 1);
                tvals[0] = T(1);
                T a_sum = T(0);
                T d_sum = T(0);
                for (int k = 0; k < count; ++k) {
                    const auto& e = tile.entries[e0 + k];
                    const T w = static_cast<T>(e.w);
                    const int32_t gid = tile.gauss_ids[e.local];
                    const T cw = w * tvals[k];
                    a_sum += cw;
                    d_sum += prep.depth[gid] * cw;
                    tvals[k + 1] = tvals[k] * (T(1) - w);
                }
                const T t_end = tvals[count];
                const T accum = T(1) - t_end;

                T g_dsum = T(0), g_accum = T(0);
                if (dL_ddepth && static_cast<double>(accum) > opts.accum_alpha_min) {
                    g_dsum = gD / accum;
                    g_accum = -gD * d_sum / (accum * accum);
                }
                // d(accum)/dw_i = -d(t_end)/dw_i; fold into the suffix form by
                // treating accum's adjoint as a bg-like term on transmittance.
                T s_c[3] = {bg_r * t_end, bg_g * t_end, bg_b * t_end};
                T s_d = T(0);
                T s_a = T(0);
                const T cx = static_cast<T>(ix) + T(0.5);
                const T cy = static_cast<T>(iy) + T(0.5);

                for (int k = count - 1; k >= 0; --k) {
                    const auto& e = tile.entries[e0 + k];
                    const T w = static_cast<T>(e.w);
                    const int32_t gid = tile.gauss_ids[e.local];
                    const T ti_trans = tvals[k];
                    const T cw = w * ti_trans;
                    const T one_minus = T(1) - w;

                    GradAcc<T>& ga = acc[e.local];
                    ga.r += gC[0] * cw;
                    ga.g += gC[1] * cw;
                    ga.b += gC[2] * cw;
                    ga.depth += g_dsum * cw;

                    T dw = gC[0] * (prep.red[gid] * ti_trans - s_c[0] / one_minus) +
                           gC[1] * (prep.green[gid] * ti_trans - s_c[1] / one_minus) +
                           gC[2] * (prep.blue[gid] * ti_trans - s_c[2] / one_minus) +
                           g_dsum * (prep.depth[gid] * ti_trans - s_d / one_minus) +
                           g_accum * (ti_trans - s_a / one_minus);

                    s_c[0] += prep.red[gid] * cw;
                    s_c[1] += prep.green[gid] * cw;
                    s_c[2] += prep.blue[gid] * cw;
                    s_d += prep.depth[gid] * cw;
                    s_a += cw;

                    if (w >= static_cast<T>(opts.alpha_clamp)) continue;  // clamped: flat
                    const T gval = w / prep.alpha[gid];
                    ga.alpha += gval * dw;
                    // q adjoint: g = exp(-q/2) => dq = -0.5 * g * (alpha*dw) = -0.5*w*dw.
                    const T dq = T(-0.5) * w * dw;
                    const T dx = cx - prep.sx[gid];
                    const T dy = cy - prep.sy[gid];
                    ga.ca += dq * dx * dx;
                    ga.cb += dq * T(2) * dx * dy;
                    ga.cc += dq * dy * dy;
                    const T ddx = dq * (T(2) * prep.ca[gid] * dx + T(2) * prep.cb[gid] * dy);
                    const T ddy = dq * (T(2) * prep.cb[gid] * dx + T(2) * prep.cc[gid] * dy);
                    ga.sx -= ddx;
                    ga.sy -= ddy;
                }
            }
        }
    });

    // Merge in tile order, then convert conic adjoints to covariance adjoints.
    std::vector<GradAcc<T>> total(n);
    for (int ti = 0; ti < ntiles; ++ti) {
        const auto& tile = state.tiles[ti];
        for (size_t k = 0; k < tile.gauss_ids.size(); ++k) {
            const auto& src = local[ti][k];
            auto& dst = total[tile.gauss_ids[k]];
            dst.sx += src.sx;
            dst.sy += src.sy;
            dst.ca += src.ca;
            dst.cb += src.cb;
            dst.cc += src.cc;
            dst.r += src.r;
            dst.g += src.g;
            dst.b += src.b;
            dst.alpha += src.alpha;
            dst.depth += src.depth;
        }
    }

    std::vector<SplatGrads> grads(n);
    for (int i = 0; i < n; ++i) {
        const auto& t = total[i];
        SplatGrads& g = grads[i];
        g.screen = {static_cast<double>(t.sx), static_cast<double>(t.sy)};
        g.rgb = {static_cast<double>(t.r), static_cast<double>(t.g), static_cast<double>(t.b)};
        g.alpha = static_cast<double>(t.alpha);
        g.depth = static_cast<double>(t.depth);
        const auto& cn = state.conics[i];
        if (std::isnan(cn[0])) continue;
        // dSigma = -C * Gc * C with Gc the full-matrix conic adjoint.
        Eigen::Matrix2d conic;
        conic << cn[0], cn[1], cn[1], cn[2];
        Eigen::Matrix2d gc;
        gc << static_cast<double>(t.ca), 0.5 * static_cast<double>(t.cb),
              0.5 * static_cast<double>(t.cb), static_cast<double>(t.cc);
        g.cov2 = -conic * gc * conic;
    }
    return grads;
}

}  // namespace

Eigen::Vector3d composite_pixel(const std::vector<std::pair<Eigen::Vector3d, double>>& splats,
                                const Eigen::Vector3d& background, double transmittance_min) {
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double trans = 1.0;
    for (const auto& [rgb, alpha] : splats) {
        color += rgb * (alpha * trans);
        trans *= (1.0 - alpha);
        if (trans < transmittance_min) break;
    }
    return color + background * trans;
}

RenderOutput render(const std::vector<RenderReadyGaussian>& gaussians, const Camera& cam,
                    const Eigen::Vector3d& background, const RasterOptions& opts,
                    ForwardState* state) {
    if (opts.precision == RasterOptions::Precision::kSingle)
        return render_impl<float>(gaussians, cam, background, opts, state);
    return render_impl<double>(gaussians, cam, background, opts, state);
}

std::vector<SplatGrads> render_backward(const std::vector<RenderReadyGaussian>& gaussians,
                                        const ForwardState& state, const ImageF& dL_dcolor,
                                        const ImageF* dL_ddepth) {
    if (!state.valid)
        throw ContractViolationError("render_backward: missing forward state (set retain_forward)");
    if (state.gaussian_count != gaussians.size())
        throw ContractViolationError("render_backward: gaussian list does not match forward state");
    if (dL_dcolor.width() != state.width || dL_dcolor.height() != state.height ||
        dL_dcolor.channels() != 3)
        throw ContractViolationError("render_backward: color adjoint shape mismatch");
    if (dL_ddepth && (dL_ddepth->width() != state.width || dL_ddepth->height() != state.height))
        throw ContractViolationError("render_backward: depth adjoint shape mismatch");
    if (state.options.precision == RasterOptions::Precision::kSingle)
        return backward_impl<float>(gaussians, state, dL_dcolor, dL_ddepth);
    return backward_impl<double>(gaussians, state, dL_dcolor, dL_ddepth);
}

}  // namespace splitgs
