#pragma once

#include <string>

#include "ssql/tensor.hpp"

namespace ssql::ssl {

enum class LossVariant { simsiam, ssql, ssql_aux, ssql_nce };

std::string loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(const std::string& name);

struct LossConfig {
    LossVariant variant = LossVariant::ssql_aux;
    float temperature = 0.5f;        // InfoNCE only
    bool quantize_prediction = true;  // which siamese branch's encoder is quantized
    bool quantize_target = false;
    bool nce_aux = true;            // ssql_nce: add the FP InfoNCE term
    bool nce_fp_negatives = true;   // ssql_nce: negatives drawn from FP embeddings

    bool wants_quant() const { return variant != LossVariant::simsiam; }
    void validate() const { check(temperature > 0.0f, "temperature must be positive"); }
};

// Mean over the batch of -cos(p_i, z_i). The caller stop-gradients z when z
// is a target; this function treats both sides symmetrically.
Tensor neg_cosine(const Tensor& p, const Tensor& z);

// D(p1, SG(z2)) + D(p2, SG(z1)); SG applied here.
Tensor simsiam_loss(const Tensor& p1, const Tensor& p2, const Tensor& z1, const Tensor& z2);

// Same form with quantized-branch predictions against FP targets.
Tensor ssql_loss(const Tensor& pq1, const Tensor& pq2, const Tensor& z1, const Tensor& z2);

// Equal-weight sum of the two.
Tensor ssql_aux_loss(const Tensor& p1, const Tensor& p2, const Tensor& pq1, const Tensor& pq2,
                     const Tensor& z1, const Tensor& z2);

// Symmetric NT-Xent over the 2B normalized embeddings; positives are the
// paired view, negatives the other 2B-2 rows.
Tensor info_nce_loss(const Tensor& z1, const Tensor& z2, float tau);

// NT-Xent with quantized anchors predicting stop-gradiented FP targets.
// fp_negatives picks which embedding set fills the negative slots.
Tensor ssql_nce_loss(const Tensor& zq1, const Tensor& zq2, const Tensor& z1, const Tensor& z2,
                     float tau, bool fp_negatives = true);

}  // namespace ssql::ssl
