#include "splitgs/losses.hpp"

#include <cmath>
#include <vector>

namespace splitgs {

namespace {

void check_same_shape(const ImageF& a, const ImageF& b, const char* who) {
    if (!a.same_shape(b)) throw ContractViolationError(std::string(who) + ": shape mismatch");
}

void check_mask(const ImageF& img, const ImageF& mask, const char* who) {
    if (mask.width() != img.width() || mask.height() != img.height() || mask.channels() != 1)
        throw ContractViolationError(std::string(who) + ": mask shape mismatch");
}

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// ------------------------------------------------------------------ SSIM --

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

int window_size_for(const ImageF& a) {
    int win = 11;
    int smallest = std::min(a.width(), a.height());
    if (smallest < win) {
        win = smallest % 2 == 1 ? smallest : smallest - 1;  // valid-region fallback
        if (win < 1) win = 1;
    }
    return win;
}

// Separable same-size convolution of one channel plane; out-of-image reads
// are zero. Only valid pixels (full window support) are meaningful.
void conv_separable(const std::vector<double>& src, int w, int h, const std::vector<double>& k,
                    std::vector<double>& tmp, std::vector<double>& dst) {
    const int r = static_cast<int>(k.size()) / 2;
    tmp.assign(src.size(), 0.0);
    dst.assign(src.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            const int lo = std::max(-r, -x), hi = std::min(r, w - 1 - x);
            for (int dx = lo; dx <= hi; ++dx) acc += k[dx + r] * src[y * w + x + dx];
            tmp[y * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            const int lo = std::max(-r, -y), hi = std::min(r, h - 1 - y);
            for (int dy = lo; dy <= hi; ++dy) acc += k[dy + r] * tmp[(y + dy) * w + x];
            dst[y * w + x] = acc;
        }
    }
}

struct SsimPlanes {
    std::vector<double> mu_a, mu_b, s_aa, s_bb, s_ab;
};

void ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int w, int h,
                 const std::vector<double>& k, SsimPlanes& p) {
    std::vector<double> tmp, prod(a.size());
    conv_separable(a, w, h, k, tmp, p.mu_a);
    conv_separable(b, w, h, k, tmp, p.mu_b);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * a[i];
    conv_separable(prod, w, h, k, tmp, p.s_aa);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = b[i] * b[i];
    conv_separable(prod, w, h, k, tmp, p.s_bb);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
    conv_separable(prod, w, h, k, tmp, p.s_ab);
}

double ssim_impl(const ImageF& a, const ImageF& b, const double* upstream, ImageF* dL_da) {
    check_same_shape(a, b, "ssim");
    const int w = a.width(), h = a.height(), ch = a.channels();
    const int win = window_size_for(a);
    const int r = win / 2;
    const auto kernel = gaussian_window(win, 1.5);
    const int vx0 = r, vx1 = w - r, vy0 = r, vy1 = h - r;
    const long valid = static_cast<long>(vx1 - vx0) * (vy1 - vy0);
    if (valid <= 0) throw ContractViolationError("ssim: no valid window placement");

    std::vector<double> pa(static_cast<size_t>(w) * h), pb(pa.size());
    SsimPlanes planes;
    std::vector<double> p1, p2, p3, tmp, c1buf, c2buf, c3buf;
    double total = 0.0;
    const double mean_norm = 1.0 / (static_cast<double>(valid) * ch);

    for (int c = 0; c < ch; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                pa[y * w + x] = a.at(x, y, c);
                pb[y * w + x] = b.at(x, y, c);
            }
        ssim_planes(pa, pb, w, h, kernel, planes);
        if (dL_da) {
            p1.assign(pa.size(), 0.0);
            p2.assign(pa.size(), 0.0);
            p3.assign(pa.size(), 0.0);
        }
        for (int y = vy0; y < vy1; ++y) {
            for (int x = vx0; x < vx1; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                const double mu_a = planes.mu_a[i], mu_b = planes.mu_b[i];
                const double var_a = planes.s_aa[i] - mu_a * mu_a;
                const double var_b = planes.s_bb[i] - mu_b * mu_b;
                const double cov = planes.s_ab[i] - mu_a * mu_b;
                const double n1 = 2.0 * mu_a * mu_b + kSsimC1;
                const double d1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
                const double n2 = 2.0 * cov + kSsimC2;
                const double d2 = var_a + var_b + kSsimC2;
                const double s = (n1 * n2) / (d1 * d2);
                total += s;
                if (!dL_da) continue;
                const double g = *upstream * mean_norm;
                const double ds_dn1 = n2 / (d1 * d2);
                const double ds_dd1 = -n1 * n2 / (d1 * d1 * d2);
                const double ds_dn2 = n1 / (d1 * d2);
                const double ds_dd2 = -n1 * n2 / (d1 * d2 * d2);
                // Through mu_a (including its appearance in var_a and cov).
                const double ds_dmu_a = 2.0 * mu_b * ds_dn1 + 2.0 * mu_a * ds_dd1 -
                                        2.0 * mu_b * ds_dn2 - 2.0 * mu_a * ds_dd2;
                p1[i] = g * ds_dmu_a;
                p2[i] = g * ds_dd2;        // d/d conv(a^2)
                p3[i] = g * 2.0 * ds_dn2;  // d/d conv(ab)
            }
        }
        if (dL_da) {
            conv_separable(p1, w, h, kernel, tmp, c1buf);
            conv_separable(p2, w, h, kernel, tmp, c2buf);
            conv_separable(p3, w, h, kernel, tmp, c3buf);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    dL_da->at(x, y, c) +=
                        c1buf[i] + 2.0 * pa[i] * c2buf[i] + pb[i] * c3buf[i];
                }
        }
    }
    return total * mean_norm;
}

ImageF apply_mask(const ImageF& img, const ImageF& mask, bool invert) {
    ImageF out = img;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double m = invert ? 1.0 - mask.at(x, y) : mask.at(x, y);
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) *= m;
        }
    return out;
}

}  // namespace

double l1_masked(const ImageF& pred, const ImageF& gt, const ImageF& mask, bool mask_pred) {
    check_same_shape(pred, gt, "l1_masked");
    check_mask(pred, mask, "l1_masked");
    const int ch = pred.channels();
    double total = 0.0;
    long count = 0;
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            const double m = mask.at(x, y);
            if (mask_pred) {
                if (m == 0.0) continue;
                for (int c = 0; c < ch; ++c) total += std::abs(pred.at(x, y, c) - gt.at(x, y, c));
                count += ch;
            } else {
                for (int c = 0; c < ch; ++c) total += std::abs(pred.at(x, y, c) - gt.at(x, y, c) * m);
                count += ch;
            }
        }
    if (count == 0) {
        log_warn("l1_masked: mask selects no pixels, returning 0");
        return 0.0;
    }
    return total / static_cast<double>(count);
}

double l1_masked_backward(const ImageF& pred, const ImageF& gt, const ImageF& mask, bool mask_pred,
                          double upstream, ImageF& dL_dpred) {
    check_same_shape(pred, gt, "l1_masked");
    check_mask(pred, mask, "l1_masked");
    if (!dL_dpred.same_shape(pred)) dL_dpred = ImageF(pred.width(), pred.height(), pred.channels());
    const int ch = pred.channels();
    long count = 0;
    if (mask_pred) {
        for (int y = 0; y < pred.height(); ++y)
            for (int x = 0; x < pred.width(); ++x)
                if (mask.at(x, y) != 0.0) count += ch;
    } else {
        count = static_cast<long>(pred.width()) * pred.height() * ch;
    }
    if (count == 0) {
        log_warn("l1_masked: mask selects no pixels, returning 0");
        return 0.0;
    }
    const double norm = 1.0 / static_cast<double>(count);
    double total = 0.0;
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            const double m = mask.at(x, y);
            if (mask_pred && m == 0.0) continue;
            for (int c = 0; c < ch; ++c) {
                const double target = mask_pred ? gt.at(x, y, c) : gt.at(x, y, c) * m;
                const double diff = pred.at(x, y, c) - target;
                total += std::abs(diff);
                dL_dpred.at(x, y, c) += upstream * norm * sign(diff);
            }
        }
    return total * norm;
}

double ssim(const ImageF& a, const ImageF& b) { return ssim_impl(a, b, nullptr, nullptr); }

double ssim_backward(const ImageF& a, const ImageF& b, double upstream, ImageF& dL_da) {
    if (!dL_da.same_shape(a)) dL_da = ImageF(a.width(), a.height(), a.channels());
    return ssim_impl(a, b, &upstream, &dL_da);
}

double static_loss(const ImageF& render_static, const ImageF& gt, const ImageF& mask,
                   const LossWeights& weights) {
    check_same_shape(render_static, gt, "static_loss");
    check_mask(render_static, mask, "static_loss");
    const ImageF pm = apply_mask(render_static, mask, false);
    const ImageF gm = apply_mask(gt, mask, false);
    const double l1 = l1_masked(render_static, gt, mask, true);
    const double dssim = (1.0 - ssim(pm, gm)) / 2.0;
    return l1 + weights.lambda_ssim * dssim;
}

double static_loss_backward(const ImageF& render_static, const ImageF& gt, const ImageF& mask,
                            const LossWeights& weights, double upstream, ImageF& dL_dpred) {
    check_same_shape(render_static, gt, "static_loss");
    check_mask(render_static, mask, "static_loss");
    if (!dL_dpred.same_shape(render_static))
        dL_dpred = ImageF(render_static.width(), render_static.height(), render_static.channels());
    const double l1 = l1_masked_backward(render_static, gt, mask, true, upstream, dL_dpred);

    const ImageF pm = apply_mask(render_static, mask, false);
    const ImageF gm = apply_mask(gt, mask, false);
    ImageF dmasked(pm.width(), pm.height(), pm.channels());
    const double s = ssim_backward(pm, gm, upstream * weights.lambda_ssim * -0.5, dmasked);
    // Chain through the mask multiplication.
    for (int y = 0; y < pm.height(); ++y)
        for (int x = 0; x < pm.width(); ++x) {
            const double m = mask.at(x, y);
            if (m == 0.0) continue;
            for (int c = 0; c < pm.channels(); ++c) dL_dpred.at(x, y, c) += dmasked.at(x, y, c) * m;
        }
    return l1 + weights.lambda_ssim * (1.0 - s) / 2.0;
}

double dynamic_loss(const ImageF& render_dynamic, const ImageF& gt, const ImageF& mask,
                    const LossWeights& weights) {
    check_same_shape(render_dynamic, gt, "dynamic_loss");
    check_mask(render_dynamic, mask, "dynamic_loss");
    ImageF inv_mask = mask;
    for (size_t i = 0; i < inv_mask.size(); ++i) inv_mask[i] = 1.0 - inv_mask[i];
    const double l1 = l1_masked(render_dynamic, gt, inv_mask, false);
    const ImageF gm = apply_mask(gt, mask, true);  // gt * (1 - M)
    const double dssim = (1.0 - ssim(render_dynamic, gm)) / 2.0;
    return l1 + weights.lambda_ssim * dssim;
}

double dynamic_loss_backward(const ImageF& render_dynamic, const ImageF& gt, const ImageF& mask,
                             const LossWeights& weights, double upstream, ImageF& dL_dpred) {
    check_same_shape(render_dynamic, gt, "dynamic_loss");
    check_mask(render_dynamic, mask, "dynamic_loss");
    if (!dL_dpred.same_shape(render_dynamic))
        dL_dpred = ImageF(render_dynamic.width(), render_dynamic.height(), render_dynamic.channels());
    ImageF inv_mask = mask;
    for (size_t i = 0; i < inv_mask.size(); ++i) inv_mask[i] = 1.0 - inv_mask[i];
    const double l1 = l1_masked_backward(render_dynamic, gt, inv_mask, false, upstream, dL_dpred);
    const ImageF gm = apply_mask(gt, mask, true);
    const double s = ssim_backward(render_dynamic, gm, upstream * weights.lambda_ssim * -0.5, dL_dpred);
    return l1 + weights.lambda_ssim * (1.0 - s) / 2.0;
}

double depth_lambda_at(const LossWeights& weights, int64_t step) {
    if (weights.depth_decay_steps <= 0) return weights.lambda_depth_initial;
    const double k = std::log(100.0) / static_cast<double>(weights.depth_decay_steps);
    return weights.lambda_depth_initial * std::exp(-k * static_cast<double>(step));
}

double depth_loss(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask,
                  int64_t step, const LossWeights& weights, double scale, double offset) {
    check_same_shape(render_depth, gt_depth, "depth_loss");
    check_mask(render_depth, mask, "depth_loss");
    double total = 0.0;
    long count = 0;
    for (int y = 0; y < render_depth.height(); ++y)
        for (int x = 0; x < render_depth.width(); ++x) {
            if (mask.at(x, y) == 0.0) continue;
            total += std::abs(scale * render_depth.at(x, y) + offset - gt_depth.at(x, y));
            ++count;
        }
    if (count == 0) return 0.0;
    return depth_lambda_at(weights, step) * total / static_cast<double>(count);
}

double depth_loss_backward(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask,
                           int64_t step, const LossWeights& weights, double scale, double offset,
                           double upstream, ImageF& dL_dpred) {
    check_same_shape(render_depth, gt_depth, "depth_loss");
    check_mask(render_depth, mask, "depth_loss");
    if (!dL_dpred.same_shape(render_depth))
        dL_dpred = ImageF(render_depth.width(), render_depth.height(), 1);
    long count = 0;
    for (int y = 0; y < render_depth.height(); ++y)
        for (int x = 0; x < render_depth.width(); ++x)
            if (mask.at(x, y) != 0.0) ++count;
    if (count == 0) return 0.0;
    const double lambda = depth_lambda_at(weights, step);
    const double norm = lambda / static_cast<double>(count);
    double total = 0.0;
    for (int y = 0; y < render_depth.height(); ++y)
        for (int x = 0; x < render_depth.width(); ++x) {
            if (mask.at(x, y) == 0.0) continue;
            const double diff = scale * render_depth.at(x, y) + offset - gt_depth.at(x, y);
            total += std::abs(diff);
            dL_dpred.at(x, y) += upstream * norm * scale * sign(diff);
        }
    return lambda * total / static_cast<double>(count);
}

DepthAlignment align_depth(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask) {
    check_same_shape(render_depth, gt_depth, "align_depth");
    check_mask(render_depth, mask, "align_depth");
    double sd = 0, sg = 0, sdd = 0, sdg = 0;
    long n = 0;
    for (int y = 0; y < render_depth.height(); ++y)
        for (int x = 0; x < render_depth.width(); ++x) {
            if (mask.at(x, y) == 0.0) continue;
            const double d = render_depth.at(x, y);
            const double g = gt_depth.at(x, y);
            sd += d;
            sg += g;
            sdd += d * d;
            sdg += d * g;
            ++n;
        }
    DepthAlignment out;
    if (n < 2) {
        if (n == 1) out.offset = sg - sd;
        return out;
    }
    const double det = sdd * n - sd * sd;
    const double var = sdd / n - (sd / n) * (sd / n);
    if (var < 1e-12 || std::abs(det) < 1e-30) {
        out.scale = 1.0;
        out.offset = (sg - sd) / static_cast<double>(n);
        return out;
    }
    out.scale = (sdg * n - sd * sg) / det;
    out.offset = (sg - out.scale * sd) / static_cast<double>(n);
    return out;
}

double psnr(const ImageF& pred, const ImageF& gt) {
    check_same_shape(pred, gt, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splitgs
