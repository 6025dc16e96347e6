#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssql/quant.hpp"
#include "ssql/tensor.hpp"

namespace ssql::nn {

enum class Backbone { tiny_cnn, mlp };

std::string backbone_name(Backbone b);
Backbone parse_backbone(const std::string& name);

// Architecture description. Serializes to a canonical one-line text form so
// checkpoints can rebuild the exact model.
struct ModelSpec {
    Backbone backbone = Backbone::tiny_cnn;
    int input_channels = 3;
    int input_size = 32;
    std::vector<int> channels{16, 32, 64, 128};  // tiny_cnn: one conv stage per entry
    std::vector<int> mlp_widths{256, 128};       // mlp: empty means flatten only
    int projection_hidden = 128;
    int projection_dim = 128;
    int predictor_hidden = 32;

    int feature_dim() const;
    void validate() const;
    std::string to_text() const;
    static ModelSpec from_text(const std::string& text);
    bool operator==(const ModelSpec&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool trainable = false;  // false marks BN running-stat buffers
};

// The single FP weight copy plus BN buffers, in fixed creation order.
struct ModelParams {
    std::vector<NamedTensor> items;

    void add(const std::string& name, Tensor t, bool trainable);
    bool has(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    size_t trainable_count() const;  // total trainable elements
    void zero_grad();
    ModelParams clone() const;  // deep copy (new buffers)

private:
    std::unordered_map<std::string, size_t> index_;
};

ModelParams build_model(const ModelSpec& spec, uint64_t seed);

// Backbone features [N, feature_dim]. A non-null plan routes every conv /
// linear weight and its input activation through fake_quant; BN statistics
// update only when update_stats (the FP branch in training).
Tensor forward_backbone(const ModelSpec& spec, ModelParams& params, const Tensor& x,
                        const quant::QuantPlan* plan, bool train, bool update_stats);

// Projection MLP on backbone features -> z [N, projection_dim].
Tensor forward_projection(const ModelSpec& spec, ModelParams& params, const Tensor& feat,
                          const quant::QuantPlan* plan, bool train, bool update_stats);

Tensor forward_encoder(const ModelSpec& spec, ModelParams& params, const Tensor& x,
                       const quant::QuantPlan* plan, bool train, bool update_stats);

// Predictor h. Always full precision; Q toggles select which branch's
// encoder is quantized, never h.
Tensor forward_predictor(const ModelSpec& spec, ModelParams& params, const Tensor& z,
                         bool train, bool update_stats);

struct ClassifierHead {
    Tensor weight;  // [classes, feat]
    Tensor bias;    // [classes]
};

ClassifierHead build_head(int classes, int feat_dim, uint64_t seed);
Tensor forward_classifier(const Tensor& features, const ClassifierHead& head);

// Weight tensors subject to quantization (backbone + projection), in order.
std::vector<std::pair<std::string, Tensor>> quantized_weight_set(const ModelSpec& spec,
                                                                 const ModelParams& params);

// Every >=2D trainable weight matrix (for weight-distribution diagnostics).
std::vector<std::pair<std::string, Tensor>> weight_matrices(const ModelParams& params);

}  // namespace ssql::nn
