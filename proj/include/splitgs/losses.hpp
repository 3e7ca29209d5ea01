#pragma once

#include <cstdint>

#include "splitgs/image.hpp"

namespace splitgs {

struct LossWeights {
    double lambda_ssim = 0.2;
    double lambda_depth_initial = 0.05;
    // Step count at which the depth weight has decayed to 1% of its initial
    // value (exponential decay). 0 resolves to the DAP length at train time.
    int64_t depth_decay_steps = 0;
    double w_joint = 1.0;
    double w_static = 0.1;
    double w_dyn = 0.1;
};

/// Masked mean absolute difference. mask_pred=true averages |pred-gt| over
/// mask=1 pixels; mask_pred=false averages |pred - gt*mask| over all pixels.
double l1_masked(const ImageF& pred, const ImageF& gt, const ImageF& mask, bool mask_pred);

/// Same value; also accumulates upstream * dL1/dpred into dL_dpred.
double l1_masked_backward(const ImageF& pred, const ImageF& gt, const ImageF& mask, bool mask_pred,
                          double upstream, ImageF& dL_dpred);

/// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2,
/// valid-region windows, channels averaged. Images smaller than the window
/// fall back to the largest odd window that fits.
double ssim(const ImageF& a, const ImageF& b);

/// SSIM value; accumulates upstream * dSSIM/da into dL_da.
double ssim_backward(const ImageF& a, const ImageF& b, double upstream, ImageF& dL_da);

/// L1 + lambda_ssim * (1 - SSIM)/2 with both sides masked by M.
double static_loss(const ImageF& render_static, const ImageF& gt, const ImageF& mask,
                   const LossWeights& weights);
double static_loss_backward(const ImageF& render_static, const ImageF& gt, const ImageF& mask,
                            const LossWeights& weights, double upstream, ImageF& dL_dpred);

/// L1 + lambda_ssim * (1 - SSIM)/2 against gt*(1-M); the prediction is not
/// masked, so content rendered inside M=1 is penalized toward black.
double dynamic_loss(const ImageF& render_dynamic, const ImageF& gt, const ImageF& mask,
                    const LossWeights& weights);
double dynamic_loss_backward(const ImageF& render_dynamic, const ImageF& gt, const ImageF& mask,
                             const LossWeights& weights, double upstream, ImageF& dL_dpred);

/// Decayed masked depth L1: lambda(step) * mean_{M=1} |scale*D + offset - Dgt|.
double depth_loss(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask,
                  int64_t step, const LossWeights& weights, double scale = 1.0, double offset = 0.0);
double depth_loss_backward(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask,
                           int64_t step, const LossWeights& weights, double scale, double offset,
                           double upstream, ImageF& dL_dpred);

/// Exponential depth-weight schedule used by depth_loss.
double depth_lambda_at(const LossWeights& weights, int64_t step);

struct DepthAlignment {
    double scale = 1.0;
    double offset = 0.0;
};

/// Least-squares (scale, offset) minimizing sum_M (scale*D + offset - Dgt)^2.
/// Constant renders fall back to scale 1 and the mean difference.
DepthAlignment align_depth(const ImageF& render_depth, const ImageF& gt_depth, const ImageF& mask);

/// 10*log10(1/MSE), capped at 100 dB for MSE < 1e-10.
double psnr(const ImageF& pred, const ImageF& gt);

}  // namespace splitgs
