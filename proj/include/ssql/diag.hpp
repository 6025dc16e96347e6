#pragma once

#include <array>
#include <string>
#include <vector>

#include "ssql/augment.hpp"
#include "ssql/data.hpp"
#include "ssql/nn.hpp"
#include "ssql/quant.hpp"

namespace ssql::diag {

// One batch of the squared-L2 decomposition on normalized embeddings:
//   q_term     = ‖zq − z‖²        quantization error
//   cl_term    = ‖z − target‖²    task (contrastive) error
//   cross_term = 2·(zq − z)·(z − target)
//   total      = ‖zq − target‖²  == q + cl + cross
// all batch-averaged. The per-sample error norms are kept for the
// correlation estimator.
struct DecompositionRecord {
    int step = 0;
    double q_term = 0.0;
    double cl_term = 0.0;
    double cross_term = 0.0;
    double total = 0.0;
    std::vector<float> q_err;   // per-sample ‖zq_i − z_i‖
    std::vector<float> cl_err;  // per-sample ‖z_i − target_i‖
};

// Raw form: zq, z, target are [n, dim] row-major and already normalized.
DecompositionRecord decompose_embeddings(const float* zq, const float* z, const float* target,
                                         int n, int dim);

// Two prepared (augmented + normalized) view batches. View 1 runs both FP
// and quantized at `bits`; view 2 supplies the stop-gradient target.
DecompositionRecord decompose_views(const nn::ModelSpec& spec, nn::ModelParams& params,
                                    const Tensor& x1, const Tensor& x2, quant::BitPair bits);

// Samples the two views from dataset rows with the training augmentation.
DecompositionRecord decompose(const nn::ModelSpec& spec, nn::ModelParams& params,
                              const DatasetHandle& data, const std::vector<int>& rows,
                              quant::BitPair bits, Pcg32& rng,
                              const AugmentConfig& aug = AugmentConfig::pretrain_default());

// Zero variance on either side maps to 0 by convention.
double pearson(const std::vector<float>& a, const std::vector<float>& b);

// Per-record Pearson r between the per-sample quantization and task errors
// (each batch is one window).
std::vector<double> qcl_correlation(const std::vector<DecompositionRecord>& records);

struct LayerStats {
    std::string layer;
    float min = 0.0f;
    float max = 0.0f;
    float std_dev = 0.0f;
    float kurtosis = 0.0f;      // m4 / m2², 3 for a normal sample
    float outlier_frac = 0.0f;  // fraction with |w| > 6·std
    std::array<float, 64> histogram{};  // mass over [min, max], sums to 1
};

// Stats over every >=2D trainable weight matrix.
std::vector<LayerStats> weight_stats(const nn::ModelParams& params);

// Effect of quantizing the encoder on the projection output, predictor-free:
// dz statistics over ‖ẑq − ẑ‖ for both views, and the change in the
// symmetric negative-cosine alignment loss evaluated directly on ẑ.
// |loss_delta| <= 2·mean_dz by Cauchy-Schwarz on unit vectors.
struct PerturbationReport {
    double mean_dz = 0.0;
    double max_dz = 0.0;
    double loss_fp = 0.0;
    double loss_q = 0.0;
    double loss_delta = 0.0;
};

PerturbationReport perturbation_probe(const nn::ModelSpec& spec, nn::ModelParams& params,
                                      const Tensor& x1, const Tensor& x2, quant::BitPair bits);

std::string decomposition_csv(const std::vector<DecompositionRecord>& records);
std::string correlation_csv(const std::vector<DecompositionRecord>& records);
std::string weight_stats_csv(const std::vector<LayerStats>& stats);

}  // namespace ssql::diag
