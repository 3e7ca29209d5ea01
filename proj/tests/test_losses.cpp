#include <doctest.h>

#include <cmath>
#include <random>

#include "splitgs/losses.hpp"

using namespace splitgs;

namespace {

ImageF random_image(std::mt19937_64& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ImageF img(w, h, c);
    for (size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
    return img;
}

ImageF half_mask(int w, int h) {
    ImageF m(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y) = x < w / 2 ? 1.0 : 0.0;
    return m;
}

// Direct (non-separable) SSIM over the valid region, independent of the
// library implementation.
double reference_ssim(const ImageF& a, const ImageF& b, int win = 11, double sigma = 1.5) {
    const int r = win / 2;
    std::vector<double> k(static_cast<size_t>(win) * win);
    double ksum = 0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double d2 = (x - r) * (x - r) + (y - r) * (y - r);
            k[y * win + x] = std::exp(-0.5 * d2 / (sigma * sigma));
            ksum += k[y * win + x];
        }
    for (auto& v : k) v /= ksum;

    const double c1 = 0.0001, c2 = 0.0009;
    double total = 0;
    long count = 0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = r; y < a.height() - r; ++y)
            for (int x = r; x < a.width() - r; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const double w = k[(dy + r) * win + dx + r];
                        const double va = a.at(x + dx, y + dy, c);
                        const double vb = b.at(x + dx, y + dy, c);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
    return total / count;
}

}  // namespace

TEST_CASE("l1_masked exact match is zero") {
    std::mt19937_64 rng(1);
    ImageF img = random_image(rng, 8, 8, 3);
    ImageF mask = half_mask(8, 8);
    CHECK(l1_masked(img, img, mask, true) == 0.0);
}

TEST_CASE("l1_masked unmasked-prediction convention") {
    // pred = 1 everywhere, gt = 0, mask covers half: penalized everywhere.
    ImageF pred(8, 8, 3, 1.0);
    ImageF gt(8, 8, 3, 0.0);
    ImageF mask = half_mask(8, 8);
    CHECK(l1_masked(pred, gt, mask, false) == doctest::Approx(1.0));
}

TEST_CASE("l1_masked equals a dense elementwise oracle") {
    std::mt19937_64 rng(2);
    ImageF pred = random_image(rng, 12, 9, 3);
    ImageF gt = random_image(rng, 12, 9, 3);
    ImageF mask = half_mask(12, 9);

    double masked_sum = 0;
    long masked_n = 0;
    double all_sum = 0;
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 12; ++x)
            for (int c = 0; c < 3; ++c) {
                if (mask.at(x, y) == 1.0) {
                    masked_sum += std::abs(pred.at(x, y, c) - gt.at(x, y, c));
                    ++masked_n;
                }
                all_sum += std::abs(pred.at(x, y, c) - gt.at(x, y, c) * mask.at(x, y));
            }
    CHECK(l1_masked(pred, gt, mask, true) ==
          doctest::Approx(masked_sum / masked_n).epsilon(1e-12));
    CHECK(l1_masked(pred, gt, mask, false) ==
          doctest::Approx(all_sum / (12 * 9 * 3)).epsilon(1e-12));
}

TEST_CASE("l1_masked all-zero mask warns and returns zero") {
    ImageF pred(4, 4, 3, 0.7);
    ImageF gt(4, 4, 3, 0.1);
    ImageF mask(4, 4, 1, 0.0);
    CHECK(l1_masked(pred, gt, mask, true) == 0.0);
}

TEST_CASE("ssim of identical images is one") {
    std::mt19937_64 rng(3);
    ImageF img = random_image(rng, 16, 16, 3);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim constant images closed form") {
    const double m1 = 0.5, m2 = 0.6;
    ImageF a(16, 16, 1, m1), b(16, 16, 1, m2);
    const double c1 = 0.0001;
    const double expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim against an independent reference implementation") {
    std::mt19937_64 rng(4);
    ImageF a = random_image(rng, 20, 14, 3);
    ImageF b = random_image(rng, 20, 14, 3);
    CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-9));

    // Textured image against its negative scores below 0.5.
    ImageF inv = a;
    for (size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - inv[i];
    CHECK(ssim(a, inv) < 0.5);
}

TEST_CASE("ssim falls back to a smaller window for tiny images") {
    std::mt19937_64 rng(5);
    ImageF a = random_image(rng, 7, 7, 1);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
}

TEST_CASE("ssim_backward matches finite differences through the window") {
    std::mt19937_64 rng(6);
    ImageF a = random_image(rng, 14, 13, 2);
    ImageF b = random_image(rng, 14, 13, 2);
    ImageF grad(14, 13, 2);
    ssim_backward(a, b, 1.0, grad);

    const double h = 1e-6;
    std::uniform_int_distribution<int> px(0, 13), py(0, 12), pc(0, 1);
    for (int trial = 0; trial < 40; ++trial) {
        const int x = px(rng), y = py(rng), c = pc(rng);
        ImageF ap = a, am = a;
        ap.at(x, y, c) += h;
        am.at(x, y, c) -= h;
        const double fd = (ssim(ap, b) - ssim(am, b)) / (2 * h);
        const double an = grad.at(x, y, c);
        if (std::abs(an) > 1e-10 || std::abs(fd) > 1e-10)
            CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}) < 1e-4);
    }
}

TEST_CASE("static_loss basics") {
    std::mt19937_64 rng(7);
    ImageF gt = random_image(rng, 16, 16, 3);
    ImageF mask = half_mask(16, 16);
    LossWeights w;
    CHECK(static_loss(gt, gt, mask, w) == doctest::Approx(0.0).epsilon(1e-12));

    ImageF zero_mask(16, 16, 1, 0.0);
    ImageF pred = random_image(rng, 16, 16, 3);
    // Vacuous supervision: both sides masked to zero.
    CHECK(static_loss(pred, gt, zero_mask, w) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("static_loss handcrafted 8x8 case matches elementwise + windowed oracle") {
    std::mt19937_64 rng(8);
    ImageF pred = random_image(rng, 8, 8, 3);
    ImageF gt = random_image(rng, 8, 8, 3);
    ImageF mask = half_mask(8, 8);
    LossWeights w;

    ImageF pm = pred, gm = gt;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) {
                pm.at(x, y, c) *= mask.at(x, y);
                gm.at(x, y, c) *= mask.at(x, y);
            }
    double l1 = 0;
    long n = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            if (mask.at(x, y) == 0.0) continue;
            for (int c = 0; c < 3; ++c) {
                l1 += std::abs(pred.at(x, y, c) - gt.at(x, y, c));
                ++n;
            }
        }
    l1 /= n;
    const double oracle = l1 + w.lambda_ssim * (1.0 - reference_ssim(pm, gm, 7)) / 2.0;
    CHECK(static_loss(pred, gt, mask, w) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("dynamic_loss asymmetry") {
    LossWeights w;
    std::mt19937_64 rng(9);
    ImageF gt = random_image(rng, 16, 16, 3);
    ImageF mask = half_mask(16, 16);

    // Exact match against masked gt is zero.
    ImageF masked_gt = gt;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) masked_gt.at(x, y, c) *= 1.0 - mask.at(x, y);
    CHECK(dynamic_loss(masked_gt, gt, mask, w) == doctest::Approx(0.0).epsilon(1e-12));

    // Content inside M=1 is penalized even where it matches gt.
    ImageF pred = masked_gt;
    bool bumped = false;
    for (int y = 0; y < 16 && !bumped; ++y)
        for (int x = 0; x < 16 && !bumped; ++x)
            if (mask.at(x, y) == 1.0) {
                for (int c = 0; c < 3; ++c) pred.at(x, y, c) = gt.at(x, y, c) + 0.2;
                bumped = true;
            }
    CHECK(dynamic_loss(pred, gt, mask, w) > 0.0);

    // Masking the prediction strictly decreases the loss.
    ImageF pred_masked = pred;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) pred_masked.at(x, y, c) *= 1.0 - mask.at(x, y);
    CHECK(dynamic_loss(pred_masked, gt, mask, w) < dynamic_loss(pred, gt, mask, w));
}

TEST_CASE("dynamic_loss equals an elementwise oracle") {
    LossWeights w;
    w.lambda_ssim = 0.0;  // isolate the L1 part for the dense check
    std::mt19937_64 rng(10);
    ImageF pred = random_image(rng, 10, 10, 3);
    ImageF gt = random_image(rng, 10, 10, 3);
    ImageF mask = half_mask(10, 10);
    double acc = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            for (int c = 0; c < 3; ++c)
                acc += std::abs(pred.at(x, y, c) - gt.at(x, y, c) * (1.0 - mask.at(x, y)));
    CHECK(dynamic_loss(pred, gt, mask, w) == doctest::Approx(acc / 300).epsilon(1e-12));
}

TEST_CASE("loss backward passes match finite differences") {
    std::mt19937_64 rng(11);
    ImageF pred = random_image(rng, 13, 12, 3);
    ImageF gt = random_image(rng, 13, 12, 3);
    ImageF mask = half_mask(13, 12);
    LossWeights w;

    ImageF gs(13, 12, 3);
    static_loss_backward(pred, gt, mask, w, 1.0, gs);
    ImageF gd(13, 12, 3);
    dynamic_loss_backward(pred, gt, mask, w, 1.0, gd);

    const double h = 1e-6;
    std::uniform_int_distribution<int> px(0, 12), py(0, 11), pc(0, 2);
    for (int trial = 0; trial < 30; ++trial) {
        const int x = px(rng), y = py(rng), c = pc(rng);
        ImageF pp = pred, pm = pred;
        pp.at(x, y, c) += h;
        pm.at(x, y, c) -= h;
        const double fd_s = (static_loss(pp, gt, mask, w) - static_loss(pm, gt, mask, w)) / (2 * h);
        const double fd_d =
            (dynamic_loss(pp, gt, mask, w) - dynamic_loss(pm, gt, mask, w)) / (2 * h);
        if (std::abs(fd_s) > 1e-8 || std::abs(gs.at(x, y, c)) > 1e-8)
            CHECK(std::abs(gs.at(x, y, c) - fd_s) /
                      std::max({std::abs(fd_s), std::abs(gs.at(x, y, c)), 1e-6}) <
                  1e-4);
        if (std::abs(fd_d) > 1e-8 || std::abs(gd.at(x, y, c)) > 1e-8)
            CHECK(std::abs(gd.at(x, y, c) - fd_d) /
                      std::max({std::abs(fd_d), std::abs(gd.at(x, y, c)), 1e-6}) <
                  1e-4);
    }
}

TEST_CASE("depth_loss schedule and values") {
    LossWeights w;
    w.lambda_depth_initial = 0.05;
    w.depth_decay_steps = 500;

    ImageF d(8, 8, 1, 3.0);
    ImageF gt(8, 8, 1, 3.0);
    ImageF mask(8, 8, 1, 1.0);
    CHECK(depth_loss(d, gt, mask, 0, w) == 0.0);

    // Unit offset on all masked pixels at step 0 gives lambda0 * 1.
    ImageF off(8, 8, 1, 4.0);
    CHECK(depth_loss(off, gt, mask, 0, w) == doctest::Approx(0.05).epsilon(1e-12));

    // Decay hits 1% of the initial value at the end of the window.
    CHECK(depth_lambda_at(w, 500) == doctest::Approx(0.0005).epsilon(1e-9));

    ImageF empty_mask(8, 8, 1, 0.0);
    CHECK(depth_loss(off, gt, empty_mask, 0, w) == 0.0);
}

TEST_CASE("depth_loss backward matches finite differences") {
    LossWeights w;
    w.depth_decay_steps = 500;
    std::mt19937_64 rng(12);
    ImageF d = random_image(rng, 8, 8, 1, 1.0, 5.0);
    ImageF gt = random_image(rng, 8, 8, 1, 1.0, 5.0);
    ImageF mask = half_mask(8, 8);
    ImageF grad(8, 8, 1);
    depth_loss_backward(d, gt, mask, 100, w, 1.1, -0.2, 1.0, grad);

    const double h = 1e-6;
    for (int x = 0; x < 8; ++x) {
        ImageF dp = d, dm = d;
        dp.at(x, 3) += h;
        dm.at(x, 3) -= h;
        const double fd = (depth_loss(dp, gt, mask, 100, w, 1.1, -0.2) -
                           depth_loss(dm, gt, mask, 100, w, 1.1, -0.2)) /
                          (2 * h);
        CHECK(grad.at(x, 3) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("align_depth closed forms") {
    std::mt19937_64 rng(13);
    ImageF d = random_image(rng, 10, 10, 1, 1.0, 4.0);
    ImageF mask(10, 10, 1, 1.0);

    auto same = align_depth(d, d, mask);
    CHECK(same.scale == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(same.offset) < 1e-9);

    // gt = 2*d - 3 inverted: render fits gt with (0.5, 1.5)... here the fit
    // maps render to gt, so d_hat = 2*gt - 3 recovers (0.5, 1.5).
    ImageF dhat = d, gt = d;
    for (size_t i = 0; i < d.size(); ++i) dhat[i] = 2.0 * d[i] - 3.0;
    auto fit = align_depth(dhat, gt, mask);
    CHECK(fit.scale == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(fit.offset == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("align_depth matches the normal equations on noisy data") {
    std::mt19937_64 rng(14);
    ImageF d = random_image(rng, 12, 12, 1, 0.5, 3.5);
    std::normal_distribution<double> noise(0.0, 0.05);
    ImageF gt(12, 12, 1);
    for (size_t i = 0; i < d.size(); ++i) gt[i] = 1.7 * d[i] + 0.4 + noise(rng);
    ImageF mask = half_mask(12, 12);

    double sd = 0, sg = 0, sdd = 0, sdg = 0;
    long n = 0;
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            if (mask.at(x, y) == 0.0) continue;
            sd += d.at(x, y);
            sg += gt.at(x, y);
            sdd += d.at(x, y) * d.at(x, y);
            sdg += d.at(x, y) * gt.at(x, y);
            ++n;
        }
    const double det = sdd * n - sd * sd;
    const double a = (sdg * n - sd * sg) / det;
    const double b = (sg - a * sd) / n;
    auto fit = align_depth(d, gt, mask);
    CHECK(fit.scale == doctest::Approx(a).epsilon(1e-9));
    CHECK(fit.offset == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("align_depth degenerate constant render") {
    ImageF d(6, 6, 1, 2.0);
    ImageF gt(6, 6, 1, 3.25);
    ImageF mask(6, 6, 1, 1.0);
    auto fit = align_depth(d, gt, mask);
    CHECK(fit.scale == 1.0);
    CHECK(fit.offset == doctest::Approx(1.25));
}

TEST_CASE("psnr closed forms") {
    ImageF a(8, 8, 3, 0.5);
    CHECK(psnr(a, a) == 100.0);

    ImageF b = a;
    for (size_t i = 0; i < b.size(); ++i) b[i] = 0.5 + 0.1;  // MSE = 0.01
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

    std::mt19937_64 rng(15);
    ImageF p = random_image(rng, 9, 7, 3);
    ImageF q = random_image(rng, 9, 7, 3);
    double mse = 0;
    for (size_t i = 0; i < p.size(); ++i) mse += (p[i] - q[i]) * (p[i] - q[i]);
    mse /= p.size();
    CHECK(psnr(p, q) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-12));
}
