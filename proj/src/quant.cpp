#include "ssql/quant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssql::quant {

QuantParams compute_qparams(std::span<const float> values, int bits) {
    check(bits >= 2 && bits <= 16, "compute_qparams: bits must be in [2,16], got " +
                                       std::to_string(bits));
    check(!values.empty(), "compute_qparams: empty tensor");
    float lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    check(std::isfinite(lo) && std::isfinite(hi), "compute_qparams: non-finite values");
    QuantParams qp;
    qp.bits = bits;
    qp.lo = lo;
    qp.hi = hi;
    if (hi == lo) {
        qp.scale = 1e-8f;
        qp.zero_point = 0;
        return qp;
    }
    qp.scale = (hi - lo) / static_cast<float>(qp.qmax());
    float z = std::nearbyintf(-lo / qp.scale);
    qp.zero_point = static_cast<int>(std::clamp(z, 0.0f, static_cast<float>(qp.qmax())));
    return qp;
}

float qdq_one(float x, const QuantParams& qp) {
    float q = std::nearbyintf(x / qp.scale + static_cast<float>(qp.zero_point));
    q = std::clamp(q, 0.0f, static_cast<float>(qp.qmax()));
    // + 0.0f turns the -0 that nearbyint makes from small negatives into +0,
    // keeping qdq(qdq(x)) == qdq(x) at the bit level
    return (q - static_cast<float>(qp.zero_point)) * qp.scale + 0.0f;
}

void qdq_span(std::span<const float> in, std::span<float> out, const QuantParams& qp) {
    check(in.size() == out.size(), "qdq_span: size mismatch");
    float inv_scale = 1.0f / qp.scale;
    float z = static_cast<float>(qp.zero_point);
    float qmax = static_cast<float>(qp.qmax());
    for (size_t i = 0; i < in.size(); ++i) {
        float q = std::nearbyintf(in[i] * inv_scale + z);
        q = std::clamp(q, 0.0f, qmax);
        out[i] = (q - z) * qp.scale + 0.0f;  // canonical zero, see qdq_one
    }
}

std::vector<float> qdq_values(std::span<const float> in, const QuantParams& qp) {
    std::vector<float> out(in.size());
    qdq_span(in, out, qp);
    return out;
}

Tensor quantize_dequantize(const Tensor& x, const QuantParams& qp) {
    return Tensor::from_data(x.shape(), qdq_values(x.data(), qp));
}

Tensor fake_quant(const Tensor& x, int bits) {
    QuantParams qp = compute_qparams(x.data(), bits);
    std::vector<float> out = qdq_values(x.data(), qp);
    size_t n = x.numel();
    return make_op_output(x.shape(), std::move(out), {x}, [n](TensorImpl& o) {
        auto& ix = *o.node->inputs[0].impl();
        if (!ix.requires_grad) return;
        ix.ensure_grad();
        for (size_t i = 0; i < n; ++i) ix.grad[i] += o.grad[i];
    });
}

// ---- bit-width handling ----

std::string bits_to_string(BitPair bits) {
    if (bits.fp()) return "fp";
    return std::to_string(bits.w) + "w" + std::to_string(bits.a) + "a";
}

BitPair parse_bit_pair(const std::string& text) {
    if (text == "fp") return BitPair{0, 0};
    size_t wpos = text.find('w');
    size_t apos = text.find('a');
    check(wpos != std::string::npos && apos != std::string::npos && wpos < apos &&
              apos == text.size() - 1,
          "bad bit pair '" + text + "' (expected e.g. 4w8a or fp)");
    try {
        int w = std::stoi(text.substr(0, wpos));
        int a = std::stoi(text.substr(wpos + 1, apos - wpos - 1));
        check(w >= 2 && w <= 16 && a >= 2 && a <= 16, "bit widths out of range in '" + text + "'");
        return BitPair{w, a};
    } catch (const std::invalid_argument&) {
        throw Error("bad bit pair '" + text + "'");
    } catch (const std::out_of_range&) {
        throw Error("bad bit pair '" + text + "'");
    }
}

std::vector<BitPair> parse_bits_list(const std::string& csv) {
    std::vector<BitPair> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t b = item.find_first_not_of(" \t");
        size_t e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(parse_bit_pair(item.substr(b, e - b + 1)));
    }
    check(!out.empty(), "empty bit list '" + csv + "'");
    return out;
}

std::vector<int> parse_bit_set(const std::string& text) {
    std::vector<int> out;
    size_t dots = text.find("..");
    auto to_int = [&](const std::string& s) {
        try {
            return std::stoi(s);
        } catch (...) {
            throw Error("bad bit set '" + text + "'");
        }
    };
    if (dots != std::string::npos) {
        int lo = to_int(text.substr(0, dots));
        int hi = to_int(text.substr(dots + 2));
        check(lo >= 2 && hi <= 16 && lo <= hi, "bad bit range '" + text + "'");
        for (int b = lo; b <= hi; ++b) out.push_back(b);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        int b = to_int(item);
        check(b >= 2 && b <= 16, "bit width out of range in '" + text + "'");
        out.push_back(b);
    }
    check(!out.empty(), "empty bit set '" + text + "'");
    return out;
}

BitPair sample_bits(const BitWidthSpec& spec, Pcg32& rng) {
    check(!spec.weight_bits.empty() && !spec.act_bits.empty(), "sample_bits: empty bit spec");
    int w = spec.weight_bits[rng.bounded(static_cast<uint32_t>(spec.weight_bits.size()))];
    int a = spec.act_bits[rng.bounded(static_cast<uint32_t>(spec.act_bits.size()))];
    return BitPair{w, a};
}

QuantizedView psq_refresh(const std::vector<std::pair<std::string, Tensor>>& fp_weights,
                          int w_bits) {
    QuantizedView view;
    view.w_bits = w_bits;
    view.weights.reserve(fp_weights.size());
    for (const auto& [name, t] : fp_weights) {
        QuantParams qp = compute_qparams(t.data(), w_bits);
        view.weights.emplace_back(name, qdq_values(t.data(), qp));
    }
    return view;
}

}  // namespace ssql::quant
