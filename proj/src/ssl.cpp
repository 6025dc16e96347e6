#include "ssql/ssl.hpp"

namespace ssql::ssl {

std::string loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::simsiam: return "simsiam";
        case LossVariant::ssql: return "ssql";
        case LossVariant::ssql_aux: return "ssql_aux";
        case LossVariant::ssql_nce: return "ssql_nce";
    }
    throw Error("bad loss variant");
}

LossVariant parse_loss_variant(const std::string& name) {
    if (name == "simsiam") return LossVariant::simsiam;
    if (name == "ssql") return LossVariant::ssql;
    if (name == "ssql_aux") return LossVariant::ssql_aux;
    if (name == "ssql_nce") return LossVariant::ssql_nce;
    throw Error("unknown loss variant '" + name + "'");
}

Tensor neg_cosine(const Tensor& p, const Tensor& z) {
    check(p.ndim() == 2 && z.ndim() == 2 && p.shape() == z.shape(),
          "neg_cosine: shapes must match, got " + shape_str(p.shape()) + " vs " +
              shape_str(z.shape()));
    return neg(mean(row_dot(l2_normalize(p), l2_normalize(z))));
}

Tensor simsiam_loss(const Tensor& p1, const Tensor& p2, const Tensor& z1, const Tensor& z2) {
    return add(neg_cosine(p1, stop_gradient(z2)), neg_cosine(p2, stop_gradient(z1)));
}

Tensor ssql_loss(const Tensor& pq1, const Tensor& pq2, const Tensor& z1, const Tensor& z2) {
    return add(neg_cosine(pq1, stop_gradient(z2)), neg_cosine(pq2, stop_gradient(z1)));
}

Tensor ssql_aux_loss(const Tensor& p1, const Tensor& p2, const Tensor& pq1, const Tensor& pq2,
                     const Tensor& z1, const Tensor& z2) {
    return add(simsiam_loss(p1, p2, z1, z2), ssql_loss(pq1, pq2, z1, z2));
}

// Builds the NT-Xent logit matrix: anchor rows against target columns with
// the self column masked out additively and the positive at (i+B) mod 2B.
static Tensor nt_xent(const Tensor& anchors, const Tensor& pos_targets,
                      const Tensor& neg_targets, float tau) {
    int M = anchors.dim(0);
    int B = M / 2;
    Tensor sims_pos = mul_scalar(matmul_nt(anchors, pos_targets), 1.0f / tau);
    Tensor logits;
    if (neg_targets.impl() == pos_targets.impl()) {
        logits = sims_pos;
    } else {
        // negatives from one set, the positive column from the other
        Tensor sims_neg = mul_scalar(matmul_nt(anchors, neg_targets), 1.0f / tau);
        std::vector<float> pos_mask(static_cast<size_t>(M) * M, 0.0f);
        std::vector<float> neg_mask(static_cast<size_t>(M) * M, 1.0f);
        for (int i = 0; i < M; ++i) {
            int pos = (i + B) % M;
            pos_mask[static_cast<size_t>(i) * M + pos] = 1.0f;
            neg_mask[static_cast<size_t>(i) * M + pos] = 0.0f;
        }
        logits = add(mul(sims_neg, Tensor::from_data({M, M}, std::move(neg_mask))),
                     mul(sims_pos, Tensor::from_data({M, M}, std::move(pos_mask))));
    }
    std::vector<float> self_mask(static_cast<size_t>(M) * M, 0.0f);
    for (int i = 0; i < M; ++i) self_mask[static_cast<size_t>(i) * M + i] = -1e9f;
    logits = add(logits, Tensor::from_data({M, M}, std::move(self_mask)));
    std::vector<int> labels(M);
    for (int i = 0; i < M; ++i) labels[i] = (i + B) % M;
    return softmax_cross_entropy(logits, labels);
}

Tensor info_nce_loss(const Tensor& z1, const Tensor& z2, float tau) {
    check(z1.ndim() == 2 && z1.shape() == z2.shape(), "info_nce: shapes must match");
    check(z1.dim(0) >= 2, "info_nce: batch must be >= 2 (no negatives otherwise)");
    check(tau > 0.0f, "info_nce: temperature must be positive");
    Tensor u = l2_normalize(concat_rows(z1, z2));
    return nt_xent(u, u, u, tau);
}

Tensor ssql_nce_loss(const Tensor& zq1, const Tensor& zq2, const Tensor& z1, const Tensor& z2,
                     float tau, bool fp_negatives) {
    check(zq1.shape() == z1.shape() && zq2.shape() == z2.shape() && z1.shape() == z2.shape(),
          "ssql_nce: shapes must match");
    check(z1.dim(0) >= 2, "ssql_nce: batch must be >= 2");
    check(tau > 0.0f, "ssql_nce: temperature must be positive");
    Tensor anchors = l2_normalize(concat_rows(zq1, zq2));
    Tensor fp = stop_gradient(l2_normalize(concat_rows(z1, z2)));
    if (fp_negatives) return nt_xent(anchors, fp, fp, tau);
    Tensor qd = stop_gradient(l2_normalize(concat_rows(zq1, zq2)));
    return nt_xent(anchors, fp, qd, tau);
}

}  // namespace ssql::ssl
