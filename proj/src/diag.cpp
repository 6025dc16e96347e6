#include "ssql/diag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace ssql::diag {

DecompositionRecord decompose_embeddings(const float* zq, const float* z, const float* target,
                                         int n, int dim) {
    check(n > 0 && dim > 0, "decompose needs a nonempty batch");
    DecompositionRecord rec;
    rec.q_err.resize(n);
    rec.cl_err.resize(n);
    double q_sum = 0.0, cl_sum = 0.0, cross_sum = 0.0, total_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* a = zq + static_cast<size_t>(i) * dim;
        const float* b = z + static_cast<size_t>(i) * dim;
        const float* t = target + static_cast<size_t>(i) * dim;
        double q = 0.0, cl = 0.0, cross = 0.0, total = 0.0;
        for (int k = 0; k < dim; ++k) {
            double dq = static_cast<double>(a[k]) - b[k];
            double dc = static_cast<double>(b[k]) - t[k];
            double dt = static_cast<double>(a[k]) - t[k];
            q += dq * dq;
            cl += dc * dc;
            cross += dq * dc;
            total += dt * dt;
        }
        rec.q_err[i] = static_cast<float>(std::sqrt(q));
        rec.cl_err[i] = static_cast<float>(std::sqrt(cl));
        q_sum += q;
        cl_sum += cl;
        cross_sum += 2.0 * cross;
        total_sum += total;
    }
    rec.q_term = q_sum / n;
    rec.cl_term = cl_sum / n;
    rec.cross_term = cross_sum / n;
    rec.total = total_sum / n;
    return rec;
}

namespace {

// Row-normalized projection output for one view, FP or quantized.
Tensor embed(const nn::ModelSpec& spec, nn::ModelParams& params, const Tensor& x,
             const quant::QuantPlan* plan) {
    Tensor z = nn::forward_encoder(spec, params, x, plan, false, false);
    return l2_normalize(z);
}

}  // namespace

DecompositionRecord decompose_views(const nn::ModelSpec& spec, nn::ModelParams& params,
                                    const Tensor& x1, const Tensor& x2, quant::BitPair bits) {
    check(x1.shape() == x2.shape(), "view batches must agree in shape");
    NoGradGuard ng;
    quant::QuantPlan plan{bits};
    const quant::QuantPlan* p = bits.fp() ? nullptr : &plan;
    Tensor z1 = embed(spec, params, x1, nullptr);
    Tensor z2 = embed(spec, params, x2, nullptr);
    Tensor zq1 = p ? embed(spec, params, x1, p) : z1;
    const int n = z1.shape()[0];
    const int dim = z1.shape()[1];
    return decompose_embeddings(zq1.data().data(), z1.data().data(), z2.data().data(), n, dim);
}

DecompositionRecord decompose(const nn::ModelSpec& spec, nn::ModelParams& params,
                              const DatasetHandle& data, const std::vector<int>& rows,
                              quant::BitPair bits, Pcg32& rng, const AugmentConfig& aug) {
    check(!rows.empty(), "decompose needs a nonempty batch");
    check(data.channels == spec.input_channels && data.image_size == spec.input_size,
          "dataset geometry does not match the model");
    const int b = static_cast<int>(rows.size());
    const size_t pp = data.pixels_per_image();
    Tensor x1 = Tensor::zeros({b, data.channels, data.image_size, data.image_size});
    Tensor x2 = Tensor::zeros({b, data.channels, data.image_size, data.image_size});
    std::vector<float> v1(pp), v2(pp);
    for (int i = 0; i < b; ++i) {
        check(rows[i] >= 0 && rows[i] < data.train_count(), "row index out of range");
        augment_two_views(data.train_image(rows[i]), v1.data(), v2.data(), data.channels,
                          data.image_size, aug, rng);
        normalize_image(v1.data(), data.channels, data.image_size, data.norm_mean.data(),
                        data.norm_std.data());
        normalize_image(v2.data(), data.channels, data.image_size, data.norm_mean.data(),
                        data.norm_std.data());
        std::memcpy(x1.data_mut().data() + i * pp, v1.data(), pp * sizeof(float));
        std::memcpy(x2.data_mut().data() + i * pp, v2.data(), pp * sizeof(float));
    }
    return decompose_views(spec, params, x1, x2, bits);
}

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
    check(a.size() == b.size(), "pearson needs equal-length series");
    check(!a.empty(), "pearson needs a nonempty series");
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double da = a[i] - ma;
        double db = b[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    double r = cov / std::sqrt(va * vb);
    return std::clamp(r, -1.0, 1.0);
}

std::vector<double> qcl_correlation(const std::vector<DecompositionRecord>& records) {
    check(!records.empty(), "qcl_correlation needs at least one record");
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(pearson(rec.q_err, rec.cl_err));
    return out;
}

std::vector<LayerStats> weight_stats(const nn::ModelParams& params) {
    std::vector<LayerStats> out;
    for (const auto& [name, t] : nn::weight_matrices(params)) {
        auto w = t.data();
        const size_t n = w.size();
        LayerStats s;
        s.layer = name;
        double mn = w[0], mx = w[0], mean = 0.0;
        for (float v : w) {
            mn = std::min<double>(mn, v);
            mx = std::max<double>(mx, v);
            mean += v;
        }
        mean /= static_cast<double>(n);
        double m2 = 0.0, m4 = 0.0;
        for (float v : w) {
            double d = v - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= static_cast<double>(n);
        m4 /= static_cast<double>(n);
        s.min = static_cast<float>(mn);
        s.max = static_cast<float>(mx);
        s.std_dev = static_cast<float>(std::sqrt(m2));
        s.kurtosis = m2 > 0.0 ? static_cast<float>(m4 / (m2 * m2)) : 0.0f;
        size_t outliers = 0;
        if (m2 > 0.0) {
            double bar = 6.0 * std::sqrt(m2);
            for (float v : w)
                if (std::abs(static_cast<double>(v)) > bar) ++outliers;
        }
        s.outlier_frac = static_cast<float>(static_cast<double>(outliers) / n);

        const double range = mx - mn;
        const double mass = 1.0 / static_cast<double>(n);
        for (float v : w) {
            int bin = 0;
            if (range > 0.0) {
                bin = static_cast<int>((v - mn) / range * 64.0);
                bin = std::clamp(bin, 0, 63);
            }
            s.histogram[bin] += static_cast<float>(mass);
        }
        out.push_back(std::move(s));
    }
    return out;
}

PerturbationReport perturbation_probe(const nn::ModelSpec& spec, nn::ModelParams& params,
                                      const Tensor& x1, const Tensor& x2, quant::BitPair bits) {
    check(x1.shape() == x2.shape(), "view batches must agree in shape");
    NoGradGuard ng;
    quant::QuantPlan plan{bits};
    const quant::QuantPlan* p = bits.fp() ? nullptr : &plan;
    Tensor z1 = embed(spec, params, x1, nullptr);
    Tensor z2 = embed(spec, params, x2, nullptr);
    Tensor zq1 = p ? embed(spec, params, x1, p) : z1;
    Tensor zq2 = p ? embed(spec, params, x2, p) : z2;
    const int n = z1.shape()[0];
    const int dim = z1.shape()[1];

    PerturbationReport rep;
    auto accumulate = [&](const Tensor& zq, const Tensor& z, const Tensor& tgt, double& loss_fp,
                          double& loss_q) {
        auto aq = zq.data();
        auto az = z.data();
        auto at = tgt.data();
        for (int i = 0; i < n; ++i) {
            double dz = 0.0, cos_fp = 0.0, cos_q = 0.0;
            for (int k = 0; k < dim; ++k) {
                size_t idx = static_cast<size_t>(i) * dim + k;
                double d = static_cast<double>(aq[idx]) - az[idx];
                dz += d * d;
                cos_fp += static_cast<double>(az[idx]) * at[idx];
                cos_q += static_cast<double>(aq[idx]) * at[idx];
            }
            dz = std::sqrt(dz);
            rep.mean_dz += dz;
            rep.max_dz = std::max(rep.max_dz, dz);
            loss_fp -= cos_fp / n;
            loss_q -= cos_q / n;
        }
    };
    accumulate(zq1, z1, z2, rep.loss_fp, rep.loss_q);
    accumulate(zq2, z2, z1, rep.loss_fp, rep.loss_q);
    rep.mean_dz /= 2.0 * n;
    rep.loss_delta = rep.loss_q - rep.loss_fp;
    return rep;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

std::string decomposition_csv(const std::vector<DecompositionRecord>& records) {
    std::string out = "step,q_term,cl_term,cross_term,total\n";
    for (const auto& r : records) {
        out += std::to_string(r.step) + "," + fmt_double(r.q_term) + "," + fmt_double(r.cl_term) +
               "," + fmt_double(r.cross_term) + "," + fmt_double(r.total) + "\n";
    }
    return out;
}

std::string correlation_csv(const std::vector<DecompositionRecord>& records) {
    std::string out = "step,r\n";
    if (records.empty()) return out;
    std::vector<double> rs = qcl_correlation(records);
    for (size_t i = 0; i < records.size(); ++i)
        out += std::to_string(records[i].step) + "," + fmt_double(rs[i]) + "\n";
    return out;
}

std::string weight_stats_csv(const std::vector<LayerStats>& stats) {
    std::string out = "layer,min,max,std,kurtosis,outlier_frac\n";
    for (const auto& s : stats) {
        check(s.layer.find(',') == std::string::npos, "layer name must not contain commas");
        out += s.layer + "," + fmt_float(s.min) + "," + fmt_float(s.max) + "," +
               fmt_float(s.std_dev) + "," + fmt_float(s.kurtosis) + "," +
               fmt_float(s.outlier_frac) + "\n";
    }
    return out;
}

}  // namespace ssql::diag
