#pragma once

#include "ssql/rng.hpp"

namespace ssql {

// Stochastic view pipeline. Every probability and range lives here so a run
// is reproducible from its config alone. Ops apply in a fixed order:
// pad-crop | resized-crop, then flip, then color jitter (random op order,
// torchvision-style), then grayscale. Output stays in [0,1]; per-channel
// normalization is a separate explicit step.
struct AugmentConfig {
    bool crop = true;  // random resized crop back to the input size
    float crop_scale_min = 0.2f;
    float crop_scale_max = 1.0f;
    float crop_ratio_min = 0.75f;
    float crop_ratio_max = 4.0f / 3.0f;

    bool pad_crop = false;  // zero-pad then random crop, supervised-style
    int pad = 4;

    float hflip_p = 0.5f;

    float jitter_p = 0.8f;
    float brightness = 0.4f;
    float contrast = 0.4f;
    float saturation = 0.4f;  // needs 3 channels, skipped otherwise
    float hue = 0.1f;         // needs 3 channels, skipped otherwise

    float grayscale_p = 0.2f;  // needs 3 channels, skipped otherwise

    // No stochastic ops at all; augment_image degenerates to a copy.
    static AugmentConfig identity();
    // The contrastive recipe (the default member values).
    static AugmentConfig pretrain_default();
    // Supervised fine-tune recipe: pad-4 crop + flip only.
    static AugmentConfig finetune_default();
};

// src and dst are [channels, size, size] plane-major and must not alias.
void augment_image(const float* src, float* dst, int channels, int size,
                   const AugmentConfig& cfg, Pcg32& rng);

// Two independent draws of the pipeline from the same source image.
void augment_two_views(const float* src, float* view1, float* view2, int channels, int size,
                       const AugmentConfig& cfg, Pcg32& rng);

// img[c] = (img[c] - mean[c]) / std[c], in place.
void normalize_image(float* img, int channels, int size, const float* mean, const float* stdv);

}  // namespace ssql
