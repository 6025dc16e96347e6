#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssql/augment.hpp"
#include "ssql/data.hpp"
#include "ssql/nn.hpp"
#include "ssql/quant.hpp"
#include "ssql/rng.hpp"
#include "ssql/ssl.hpp"

namespace ssql::train {

// lr = 0.5 * base * (1 + cos(pi * step / total)). step 0 gives base, the
// final step gives 0.
float cosine_lr(float base_lr, int step, int total_steps);

// v <- momentum * v + (g + wd * w); w <- w - lr * v.
void sgd_update(float* w, const float* g, float* v, size_t n, float lr, float momentum, float wd);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 128;
    float base_lr = 0.05f;        // stated for batch 256
    bool lr_scale_linear = true;  // effective lr = base_lr * batch_size / 256
    float momentum = 0.9f;
    // Negative means "per-variant default": 5e-4 for simsiam, 1e-4 otherwise.
    float weight_decay = -1.0f;
    ssl::LossConfig loss;
    quant::BitWidthSpec bits;
    uint64_t seed = 0;
    int snapshot_every = 0;  // epochs between snapshot callbacks; 0 = final only
    AugmentConfig augment;

    float effective_lr() const;
    float resolved_weight_decay() const;
    void validate() const;
};

struct StepMetrics {
    int step = 0;   // global, 0-based
    int epoch = 0;  // 0-based
    int w_bits = 0;  // 0 encodes a full-precision step
    int a_bits = 0;
    float lr = 0.0f;
    double loss = 0.0;
    double loss_simsiam = 0.0;  // FP self-supervised term when the variant has one
    double loss_ssql = 0.0;     // quantized-branch term (cosine or NT-Xent)
    double wall_ms = 0.0;       // not serialized
};

// Header: step,epoch,w_bits,a_bits,lr,loss,loss_simsiam,loss_ssql.
// Numeric fields print with enough digits to reparse bit-exactly.
std::string metrics_to_csv(const std::vector<StepMetrics>& rows);
std::vector<StepMetrics> metrics_from_csv(const std::string& csv);

// Holds the single FP parameter copy, optimizer velocity, and the named rng
// streams. Quantized views are re-derived from the FP weights inside each
// forward, so a step's weight update automatically propagates to the next
// step's quantized branches.
struct Trainer {
    nn::ModelSpec spec;
    TrainConfig cfg;
    nn::ModelParams params;
    std::vector<std::vector<float>> velocity;  // parallel to trainable items
    Pcg32 rng_augment, rng_bits, rng_shuffle;
    int step = 0;
    int total_steps = 0;

    Trainer(const nn::ModelSpec& model_spec, const TrainConfig& config);
    // Resume from existing parameters (velocity restarts at zero).
    Trainer(const nn::ModelSpec& model_spec, const TrainConfig& config, nn::ModelParams warm);

    float lr_now() const;

    // One optimization step over the given train-split rows.
    StepMetrics train_step(const DatasetHandle& data, const std::vector<int>& batch);

    void apply_sgd(float lr);
};

// Runs epochs * ceil(N / batch) steps with a per-epoch seeded shuffle; a
// trailing batch of fewer than 2 rows folds into the previous one. The
// callbacks fire after every epoch / step (snapshot and diagnostics cadence
// is the caller's call).
std::vector<StepMetrics> pretrain(
    Trainer& trainer, const DatasetHandle& data,
    const std::function<void(Trainer&, int epoch)>& on_epoch_end = {},
    const std::function<void(Trainer&, const StepMetrics&)>& on_step = {});

}  // namespace ssql::train
