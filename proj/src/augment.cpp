#include "ssql/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "ssql/tensor.hpp"

namespace ssql {

AugmentConfig AugmentConfig::identity() {
    AugmentConfig c;
    c.crop = false;
    c.pad_crop = false;
    c.hflip_p = 0.0f;
    c.jitter_p = 0.0f;
    c.grayscale_p = 0.0f;
    return c;
}

AugmentConfig AugmentConfig::pretrain_default() { return AugmentConfig{}; }

AugmentConfig AugmentConfig::finetune_default() {
    AugmentConfig c = identity();
    c.pad_crop = true;
    c.pad = 4;
    c.hflip_p = 0.5f;
    return c;
}

namespace {

constexpr float kLumaR = 0.299f, kLumaG = 0.587f, kLumaB = 0.114f;

// Bilinear resample of the crop window (ci,cj,h,w) of a [C,S,S] image onto a
// [C,out,out] grid, half-pixel-center convention, edges clamped. Exact copy
// when the window already has the output geometry.
void resize_bilinear(const float* src, int channels, int size, int ci, int cj, int h, int w,
                     float* dst, int out) {
    const size_t plane_in = static_cast<size_t>(size) * size;
    const size_t plane_out = static_cast<size_t>(out) * out;
    const float sy_scale = static_cast<float>(h) / static_cast<float>(out);
    const float sx_scale = static_cast<float>(w) / static_cast<float>(out);
    for (int y = 0; y < out; ++y) {
        float sy = (static_cast<float>(y) + 0.5f) * sy_scale - 0.5f;
        sy = std::clamp(sy, 0.0f, static_cast<float>(h - 1));
        int y0 = static_cast<int>(sy);
        int y1 = std::min(y0 + 1, h - 1);
        float fy = sy - static_cast<float>(y0);
        for (int x = 0; x < out; ++x) {
            float sx = (static_cast<float>(x) + 0.5f) * sx_scale - 0.5f;
            sx = std::clamp(sx, 0.0f, static_cast<float>(w - 1));
            int x0 = static_cast<int>(sx);
            int x1 = std::min(x0 + 1, w - 1);
            float fx = sx - static_cast<float>(x0);
            for (int c = 0; c < channels; ++c) {
                const float* p = src + c * plane_in;
                float v00 = p[(ci + y0) * size + (cj + x0)];
                float v01 = p[(ci + y0) * size + (cj + x1)];
                float v10 = p[(ci + y1) * size + (cj + x0)];
                float v11 = p[(ci + y1) * size + (cj + x1)];
                float top = v00 + (v01 - v00) * fx;
                float bot = v10 + (v11 - v10) * fx;
                dst[c * plane_out + y * out + x] = top + (bot - top) * fy;
            }
        }
    }
}

void random_resized_crop(const float* src, float* dst, int channels, int size,
                         const AugmentConfig& cfg, Pcg32& rng) {
    const float area = static_cast<float>(size) * size;
    const float log_lo = std::log(cfg.crop_ratio_min);
    const float log_hi = std::log(cfg.crop_ratio_max);
    int ch = -1, cw = -1, ci = 0, cj = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        float target = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max) * area;
        float ratio = std::exp(rng.uniform(log_lo, log_hi));
        int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        int hh = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w > 0 && w <= size && hh > 0 && hh <= size) {
            ci = rng.randint(size - hh + 1);
            cj = rng.randint(size - w + 1);
            ch = hh;
            cw = w;
            break;
        }
    }
    if (ch < 0) {
        // All attempts out of bounds: largest centered window with a legal ratio.
        int w = size, hh = size;
        if (1.0f < cfg.crop_ratio_min)
            hh = static_cast<int>(std::lround(size / cfg.crop_ratio_min));
        else if (1.0f > cfg.crop_ratio_max)
            w = static_cast<int>(std::lround(size * cfg.crop_ratio_max));
        ci = (size - hh) / 2;
        cj = (size - w) / 2;
        ch = hh;
        cw = w;
    }
    resize_bilinear(src, channels, size, ci, cj, ch, cw, dst, size);
}

void pad_random_crop(const float* src, float* dst, int channels, int size, int pad, Pcg32& rng) {
    int top = rng.randint(2 * pad + 1);
    int left = rng.randint(2 * pad + 1);
    const size_t plane = static_cast<size_t>(size) * size;
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < size; ++y) {
            int sy = y + top - pad;
            for (int x = 0; x < size; ++x) {
                int sx = x + left - pad;
                bool inside = sy >= 0 && sy < size && sx >= 0 && sx < size;
                dst[c * plane + y * size + x] = inside ? src[c * plane + sy * size + sx] : 0.0f;
            }
        }
    }
}

void hflip_inplace(float* img, int channels, int size) {
    const size_t plane = static_cast<size_t>(size) * size;
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < size; ++y) {
            float* row = img + c * plane + static_cast<size_t>(y) * size;
            std::reverse(row, row + size);
        }
}

float luma(const float* img, size_t plane, size_t p) {
    return kLumaR * img[p] + kLumaG * img[plane + p] + kLumaB * img[2 * plane + p];
}

void adjust_brightness(float* img, size_t n, float f) {
    for (size_t i = 0; i < n; ++i) img[i] = std::clamp(img[i] * f, 0.0f, 1.0f);
}

void adjust_contrast(float* img, int channels, size_t plane, float f) {
    double sum = 0.0;
    if (channels == 3) {
        for (size_t p = 0; p < plane; ++p) sum += luma(img, plane, p);
    } else {
        for (size_t i = 0; i < plane * channels; ++i) sum += img[i];
    }
    float mean = static_cast<float>(sum / (channels == 3 ? plane : plane * channels));
    for (size_t i = 0; i < plane * channels; ++i)
        img[i] = std::clamp(mean + f * (img[i] - mean), 0.0f, 1.0f);
}

void adjust_saturation(float* img, size_t plane, float f) {
    for (size_t p = 0; p < plane; ++p) {
        float g = luma(img, plane, p);
        for (int c = 0; c < 3; ++c) {
            float& v = img[c * plane + p];
            v = std::clamp(g + f * (v - g), 0.0f, 1.0f);
        }
    }
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    float mx = std::max({r, g, b});
    float mn = std::min({r, g, b});
    v = mx;
    float d = mx - mn;
    s = mx <= 0.0f ? 0.0f : d / mx;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r)
        h = (g - b) / d;
    else if (mx == g)
        h = 2.0f + (b - r) / d;
    else
        h = 4.0f + (r - g) / d;
    h /= 6.0f;
    if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    float i = std::floor(h * 6.0f);
    float f = h * 6.0f - i;
    float p = v * (1.0f - s);
    float q = v * (1.0f - s * f);
    float t = v * (1.0f - s * (1.0f - f));
    switch (static_cast<int>(i) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

void adjust_hue(float* img, size_t plane, float delta) {
    for (size_t p = 0; p < plane; ++p) {
        float h, s, v;
        rgb_to_hsv(img[p], img[plane + p], img[2 * plane + p], h, s, v);
        hsv_to_rgb(h + delta, s, v, img[p], img[plane + p], img[2 * plane + p]);
    }
}

void to_grayscale(float* img, size_t plane) {
    for (size_t p = 0; p < plane; ++p) {
        float g = luma(img, plane, p);
        img[p] = img[plane + p] = img[2 * plane + p] = g;
    }
}

void color_jitter(float* img, int channels, size_t plane, const AugmentConfig& cfg, Pcg32& rng) {
    std::vector<int> order{0, 1, 2, 3};
    rng.shuffle(order);
    for (int op : order) {
        switch (op) {
            case 0:
                if (cfg.brightness > 0.0f)
                    adjust_brightness(img, plane * channels,
                                      rng.uniform(std::max(0.0f, 1.0f - cfg.brightness),
                                                  1.0f + cfg.brightness));
                break;
            case 1:
                if (cfg.contrast > 0.0f)
                    adjust_contrast(img, channels, plane,
                                    rng.uniform(std::max(0.0f, 1.0f - cfg.contrast),
                                                1.0f + cfg.contrast));
                break;
            case 2:
                if (cfg.saturation > 0.0f && channels == 3)
                    adjust_saturation(img, plane,
                                      rng.uniform(std::max(0.0f, 1.0f - cfg.saturation),
                                                  1.0f + cfg.saturation));
                break;
            default:
                if (cfg.hue > 0.0f && channels == 3)
                    adjust_hue(img, plane, rng.uniform(-cfg.hue, cfg.hue));
                break;
        }
    }
}

}  // namespace

void augment_image(const float* src, float* dst, int channels, int size, const AugmentConfig& cfg,
                   Pcg32& rng) {
    check(src != dst, "augment: src and dst must not alias");
    const size_t plane = static_cast<size_t>(size) * size;
    const size_t n = plane * channels;

    if (cfg.pad_crop)
        pad_random_crop(src, dst, channels, size, cfg.pad, rng);
    else if (cfg.crop)
        random_resized_crop(src, dst, channels, size, cfg, rng);
    else
        std::memcpy(dst, src, n * sizeof(float));

    if (cfg.hflip_p > 0.0f && rng.uniform() < cfg.hflip_p) hflip_inplace(dst, channels, size);
    if (cfg.jitter_p > 0.0f && rng.uniform() < cfg.jitter_p)
        color_jitter(dst, channels, plane, cfg, rng);
    if (cfg.grayscale_p > 0.0f && channels == 3 && rng.uniform() < cfg.grayscale_p)
        to_grayscale(dst, plane);

    for (size_t i = 0; i < n; ++i) dst[i] = std::clamp(dst[i], 0.0f, 1.0f);
}

void augment_two_views(const float* src, float* view1, float* view2, int channels, int size,
                       const AugmentConfig& cfg, Pcg32& rng) {
    augment_image(src, view1, channels, size, cfg, rng);
    augment_image(src, view2, channels, size, cfg, rng);
}

void normalize_image(float* img, int channels, int size, const float* mean, const float* stdv) {
    const size_t plane = static_cast<size_t>(size) * size;
    for (int c = 0; c < channels; ++c) {
        float m = mean[c];
        float inv = 1.0f / stdv[c];
        for (size_t p = 0; p < plane; ++p) img[c * plane + p] = (img[c * plane + p] - m) * inv;
    }
}

}  // namespace ssql
