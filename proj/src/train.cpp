#include "ssql/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <numeric>
#include <sstream>

namespace ssql::train {

float cosine_lr(float base_lr, int step, int total_steps) {
    check(total_steps > 0, "cosine_lr: total_steps must be positive");
    check(step >= 0 && step <= total_steps, "cosine_lr: step outside [0, total]");
    double phase = static_cast<double>(step) / static_cast<double>(total_steps);
    return static_cast<float>(0.5 * base_lr * (1.0 + std::cos(phase * 3.141592653589793)));
}

void sgd_update(float* w, const float* g, float* v, size_t n, float lr, float momentum,
                float wd) {
    for (size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] + (g[i] + wd * w[i]);
        w[i] -= lr * v[i];
    }
}

float TrainConfig::effective_lr() const {
    return lr_scale_linear ? base_lr * static_cast<float>(batch_size) / 256.0f : base_lr;
}

float TrainConfig::resolved_weight_decay() const {
    if (weight_decay >= 0.0f) return weight_decay;
    return loss.variant == ssl::LossVariant::simsiam ? 5e-4f : 1e-4f;
}

void TrainConfig::validate() const {
    check(epochs >= 0, "train config: epochs must be >= 0");
    check(batch_size >= 2, "train config: batch_size must be >= 2 (batchnorm)");
    check(base_lr > 0.0f, "train config: base_lr must be positive");
    check(momentum >= 0.0f && momentum < 1.0f, "train config: momentum in [0,1)");
    loss.validate();
    quant::BitWidthSpec b = bits;  // constructor-validated fields, re-assert ranges
    check(!b.weight_bits.empty() && !b.act_bits.empty(), "train config: empty bit sets");
}

std::string metrics_to_csv(const std::vector<StepMetrics>& rows) {
    std::string out = "step,epoch,w_bits,a_bits,lr,loss,loss_simsiam,loss_ssql\n";
    char buf[200];
    for (const StepMetrics& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.9g,%.17g,%.17g,%.17g\n", r.step, r.epoch,
                      r.w_bits, r.a_bits, static_cast<double>(r.lr), r.loss, r.loss_simsiam,
                      r.loss_ssql);
        out += buf;
    }
    return out;
}

std::vector<StepMetrics> metrics_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "metrics csv: empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check(line == "step,epoch,w_bits,a_bits,lr,loss,loss_simsiam,loss_ssql",
          "metrics csv: unexpected header '" + line + "'");
    std::vector<StepMetrics> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[8];
        for (int i = 0; i < 8; ++i)
            check(static_cast<bool>(std::getline(ls, f[i], ',')), "metrics csv: short row");
        StepMetrics r;
        r.step = std::stoi(f[0]);
        r.epoch = std::stoi(f[1]);
        r.w_bits = std::stoi(f[2]);
        r.a_bits = std::stoi(f[3]);
        r.lr = std::stof(f[4]);
        r.loss = std::stod(f[5]);
        r.loss_simsiam = std::stod(f[6]);
        r.loss_ssql = std::stod(f[7]);
        rows.push_back(r);
    }
    return rows;
}

Trainer::Trainer(const nn::ModelSpec& model_spec, const TrainConfig& config)
    : Trainer(model_spec, config, nn::build_model(model_spec, config.seed)) {}

Trainer::Trainer(const nn::ModelSpec& model_spec, const TrainConfig& config, nn::ModelParams warm)
    : spec(model_spec),
      cfg(config),
      params(std::move(warm)),
      rng_augment(make_rng(config.seed, RngStream::augment)),
      rng_bits(make_rng(config.seed, RngStream::bits)),
      rng_shuffle(make_rng(config.seed, RngStream::shuffle)) {
    cfg.validate();
    spec.validate();
    check(!params.items.empty(), "trainer: empty parameter set");
    for (const auto& item : params.items)
        if (item.trainable) velocity.emplace_back(shape_numel(item.tensor.shape()), 0.0f);
}

float Trainer::lr_now() const {
    return total_steps > 0 ? cosine_lr(cfg.effective_lr(), step, total_steps)
                           : cfg.effective_lr();
}

void Trainer::apply_sgd(float lr) {
    const float wd = cfg.resolved_weight_decay();
    size_t k = 0;
    for (auto& item : params.items) {
        if (!item.trainable) continue;
        std::vector<float>& v = velocity[k++];
        if (!item.tensor.has_grad()) continue;  // untouched this step
        sgd_update(item.tensor.data_mut().data(), item.tensor.grad().data(), v.data(),
                   v.size(), lr,
                   cfg.momentum, wd);
    }
}

namespace {

// Last-resort visibility into a blown-up step.
void dump_param_stats(const nn::ModelParams& params) {
    for (const auto& item : params.items) {
        if (!item.trainable) continue;
        const float* d = item.tensor.data().data();
        size_t n = shape_numel(item.tensor.shape());
        float lo = d[0], hi = d[0];
        double sum = 0.0;
        bool finite = true;
        for (size_t i = 0; i < n; ++i) {
            lo = std::min(lo, d[i]);
            hi = std::max(hi, d[i]);
            sum += d[i];
            finite = finite && std::isfinite(d[i]);
        }
        std::cerr << "  " << item.name << ": min " << lo << " max " << hi << " mean "
                  << sum / static_cast<double>(n) << (finite ? "" : "  [non-finite]") << "\n";
    }
}

}  // namespace

StepMetrics Trainer::train_step(const DatasetHandle& data, const std::vector<int>& batch) {
    auto t0 = std::chrono::steady_clock::now();
    const int b = static_cast<int>(batch.size());
    check(b >= 2, "train_step: batch of " + std::to_string(b) +
                      " is degenerate under batchnorm (need >= 2)");
    const int c = data.channels, s = data.image_size;
    const size_t pp = data.pixels_per_image();
    check(c == spec.input_channels && s == spec.input_size,
          "train_step: dataset geometry does not match the model spec");

    Tensor x1 = Tensor::zeros({b, c, s, s});
    Tensor x2 = Tensor::zeros({b, c, s, s});
    {
        std::vector<float> v1(pp), v2(pp);
        float* d1 = x1.data_mut().data();
        float* d2 = x2.data_mut().data();
        for (int i = 0; i < b; ++i) {
            check(batch[i] >= 0 && batch[i] < data.train_count(), "train_step: index range");
            augment_two_views(data.train_image(batch[i]), v1.data(), v2.data(), c, s,
                              cfg.augment, rng_augment);
            normalize_image(v1.data(), c, s, data.norm_mean.data(), data.norm_std.data());
            normalize_image(v2.data(), c, s, data.norm_mean.data(), data.norm_std.data());
            std::memcpy(d1 + i * pp, v1.data(), pp * sizeof(float));
            std::memcpy(d2 + i * pp, v2.data(), pp * sizeof(float));
        }
    }

    const ssl::LossConfig& lc = cfg.loss;
    const bool need_q =
        lc.variant != ssl::LossVariant::simsiam && (lc.quantize_prediction || lc.quantize_target);

    quant::BitPair bits{};
    quant::QuantPlan plan;
    if (need_q) {
        bits = quant::sample_bits(cfg.bits, rng_bits);
        plan.bits = bits;
    }

    // FP branch first; it owns the BN running-stat updates.
    Tensor z1 = nn::forward_encoder(spec, params, x1, nullptr, true, true);
    Tensor z2 = nn::forward_encoder(spec, params, x2, nullptr, true, true);
    Tensor zq1, zq2;
    if (need_q) {
        zq1 = nn::forward_encoder(spec, params, x1, &plan, true, false);
        zq2 = nn::forward_encoder(spec, params, x2, &plan, true, false);
    }

    Tensor total, sim_term, q_term;
    bool have_sim = false, have_q = false;
    switch (lc.variant) {
        case ssl::LossVariant::simsiam: {
            Tensor p1 = nn::forward_predictor(spec, params, z1, true, true);
            Tensor p2 = nn::forward_predictor(spec, params, z2, true, true);
            sim_term = ssl::simsiam_loss(p1, p2, z1, z2);
            total = sim_term;
            have_sim = true;
            break;
        }
        case ssl::LossVariant::ssql:
        case ssl::LossVariant::ssql_aux: {
            const bool aux = lc.variant == ssl::LossVariant::ssql_aux;
            Tensor p1, p2;
            if (aux || !lc.quantize_prediction) {
                p1 = nn::forward_predictor(spec, params, z1, true, true);
                p2 = nn::forward_predictor(spec, params, z2, true, true);
            }
            Tensor predq1, predq2;
            if (lc.quantize_prediction) {
                predq1 = nn::forward_predictor(spec, params, zq1, true, !aux);
                predq2 = nn::forward_predictor(spec, params, zq2, true, !aux);
            } else {
                predq1 = p1;
                predq2 = p2;
            }
            const Tensor& tgt1 = lc.quantize_target ? zq1 : z1;
            const Tensor& tgt2 = lc.quantize_target ? zq2 : z2;
            q_term = ssl::ssql_loss(predq1, predq2, tgt1, tgt2);
            have_q = true;
            if (aux) {
                sim_term = ssl::simsiam_loss(p1, p2, z1, z2);
                have_sim = true;
                total = add(sim_term, q_term);
            } else {
                total = q_term;
            }
            break;
        }
        case ssl::LossVariant::ssql_nce: {
            const Tensor& anc1 = lc.quantize_prediction ? zq1 : z1;
            const Tensor& anc2 = lc.quantize_prediction ? zq2 : z2;
            const Tensor& tgt1 = lc.quantize_target ? zq1 : z1;
            const Tensor& tgt2 = lc.quantize_target ? zq2 : z2;
            q_term = ssl::ssql_nce_loss(anc1, anc2, tgt1, tgt2, lc.temperature,
                                        lc.nce_fp_negatives);
            have_q = true;
            if (lc.nce_aux) {
                sim_term = ssl::info_nce_loss(z1, z2, lc.temperature);
                have_sim = true;
                total = add(sim_term, q_term);
            } else {
                total = q_term;
            }
            break;
        }
    }

    StepMetrics m;
    m.step = step;
    m.epoch = 0;  // pretrain() stamps the real epoch
    m.w_bits = need_q ? bits.w : 0;
    m.a_bits = need_q ? bits.a : 0;
    m.lr = lr_now();
    m.loss = total.item();
    m.loss_simsiam = have_sim ? sim_term.item() : 0.0;
    m.loss_ssql = have_q ? q_term.item() : 0.0;

    if (!std::isfinite(m.loss)) {
        std::cerr << "non-finite loss at step " << step << " (bits "
                  << quant::bits_to_string(bits) << ", lr " << m.lr << "); parameter stats:\n";
        dump_param_stats(params);
        throw Error("train_step: non-finite loss at step " + std::to_string(step));
    }

    params.zero_grad();
    total.backward();
    apply_sgd(m.lr);
    ++step;
    // The quantized views die with this step's graph; the next forward
    // re-derives them from the freshly updated FP weights.

    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    return m;
}

std::vector<StepMetrics> pretrain(Trainer& trainer, const DatasetHandle& data,
                                  const std::function<void(Trainer&, int)>& on_epoch_end,
                                  const std::function<void(Trainer&, const StepMetrics&)>& on_step) {
    trainer.cfg.validate();
    const int n = data.train_count();
    check(n >= 1, "pretrain: empty train split");
    const int bsz = trainer.cfg.batch_size;

    int batches_per_epoch = (n + bsz - 1) / bsz;
    if (n % bsz == 1 && batches_per_epoch >= 2) --batches_per_epoch;  // trailing row folds
    trainer.total_steps = trainer.cfg.epochs * batches_per_epoch;

    std::vector<StepMetrics> log;
    log.reserve(trainer.total_steps);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < trainer.cfg.epochs; ++epoch) {
        trainer.rng_shuffle.shuffle(order);
        std::vector<std::vector<int>> plan;
        for (int start = 0; start < n; start += bsz) {
            int end = std::min(start + bsz, n);
            plan.emplace_back(order.begin() + start, order.begin() + end);
        }
        if (plan.size() >= 2 && plan.back().size() < 2) {
            plan[plan.size() - 2].push_back(plan.back()[0]);
            plan.pop_back();
        }
        for (const auto& batch : plan) {
            StepMetrics m = trainer.train_step(data, batch);
            m.epoch = epoch;
            log.push_back(m);
            if (on_step) on_step(trainer, m);
        }
        if (on_epoch_end) on_epoch_end(trainer, epoch);
    }
    return log;
}

}  // namespace ssql::train
