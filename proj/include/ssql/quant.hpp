#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssql/rng.hpp"
#include "ssql/tensor.hpp"

namespace ssql::quant {

// Uniform affine quantizer, per-tensor, asymmetric min-max range.
//   S = (u - l) / (2^q - 1),  Z = clip(round(-l / S), 0, 2^q - 1)
// Rounding is round-half-to-even everywhere.
struct QuantParams {
    float scale = 1.0f;
    int zero_point = 0;
    int bits = 8;
    float lo = 0.0f;  // observed min
    float hi = 0.0f;  // observed max
    int qmax() const { return (1 << bits) - 1; }
};

QuantParams compute_qparams(std::span<const float> values, int bits);
inline QuantParams compute_qparams(const Tensor& t, int bits) {
    return compute_qparams(t.data(), bits);
}

float qdq_one(float x, const QuantParams& qp);
void qdq_span(std::span<const float> in, std::span<float> out, const QuantParams& qp);
std::vector<float> qdq_values(std::span<const float> in, const QuantParams& qp);

// Quantize-then-dequantize snapshot. Not a gradient path: the result is a
// constant with respect to the tape (PTQ semantics).
Tensor quantize_dequantize(const Tensor& x, const QuantParams& qp);

// Fake quantization for training: forward is qdq with range taken from the
// current values of x; backward passes the output gradient through unchanged
// (straight-through estimator).
Tensor fake_quant(const Tensor& x, int bits);

// ---- bit-width handling ----

struct BitPair {
    int w = 0;  // 0 means full precision
    int a = 0;
    bool fp() const { return w == 0 && a == 0; }
    bool operator==(const BitPair&) const = default;
};

std::string bits_to_string(BitPair bits);          // "4w8a" or "fp"
BitPair parse_bit_pair(const std::string& text);   // accepts "NwMa" and "fp"
std::vector<BitPair> parse_bits_list(const std::string& csv);

struct BitWidthSpec {
    std::vector<int> weight_bits{2, 3, 4, 5, 6, 7, 8};
    std::vector<int> act_bits{4, 5, 6, 7, 8};
};

// "2..8", "4,6,8", or "5"
std::vector<int> parse_bit_set(const std::string& text);

// What a quantized forward pass actually quantizes. Null plan (or fp bits)
// means the branch runs in full precision.
struct QuantPlan {
    BitPair bits;
    bool quantize_weights = true;
    bool quantize_acts = true;
    bool quantize_bias = false;  // biases stay FP by default
};

// One independent uniform draw per side; weight bits drawn first.
BitPair sample_bits(const BitWidthSpec& spec, Pcg32& rng);

// Weights re-quantized from the current full-precision values. Training
// keeps a single weight copy; this is the derived view, recomputed on
// demand, never updated by the optimizer itself.
struct QuantizedView {
    int w_bits = 0;
    std::vector<std::pair<std::string, std::vector<float>>> weights;
};

QuantizedView psq_refresh(const std::vector<std::pair<std::string, Tensor>>& fp_weights,
                          int w_bits);

}  // namespace ssql::quant
