#include "ssql/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>

#include "ssql/augment.hpp"
#include "ssql/train.hpp"

namespace ssql::eval {

EvalProtocol EvalProtocol::linear_default() {
    EvalProtocol p;
    p.mode = Mode::linear_eval;
    p.bits = quant::parse_bits_list("fp,8w8a,6w6a,5w5a,4w4a,3w3a,2w8a,2w4a");
    return p;
}

EvalProtocol EvalProtocol::finetune_default() {
    EvalProtocol p;
    p.mode = Mode::finetune_ptq;
    p.bits = quant::parse_bits_list("fp,8w8a,6w6a,5w5a,4w4a,3w3a,2w8a,2w4a");
    p.epochs = 50;
    p.lr = 0.001f;
    p.lr_drops = {30, 40};
    p.weight_decay = 1e-4f;
    p.augment = true;
    return p;
}

void EvalProtocol::validate() const {
    check(!bits.empty(), "eval protocol: empty bit list");
    for (quant::BitPair b : bits)
        check(b.fp() || (b.w >= 2 && b.w <= 8 && b.a >= 3 && b.a <= 8),
              "eval protocol: bit pair " + quant::bits_to_string(b) +
                  " outside {2..8}w x {3..8}a or fp");
    check(epochs >= 0, "eval protocol: epochs must be >= 0");
    check(lr > 0.0f, "eval protocol: lr must be positive");
    check(batch_size >= 1, "eval protocol: batch_size must be >= 1");
    check(momentum >= 0.0f && momentum < 1.0f, "eval protocol: momentum in [0,1)");
    check(weight_decay >= 0.0f, "eval protocol: weight_decay must be >= 0");
}

std::string eval_mode_name(EvalProtocol::Mode m) {
    return m == EvalProtocol::Mode::linear_eval ? "linear_eval" : "finetune_ptq";
}

EvalProtocol::Mode parse_eval_mode(const std::string& name) {
    if (name == "linear_eval") return EvalProtocol::Mode::linear_eval;
    if (name == "finetune_ptq") return EvalProtocol::Mode::finetune_ptq;
    throw Error("unknown eval mode '" + name + "' (expected linear_eval or finetune_ptq)");
}

std::string ResultTable::to_csv() const {
    std::string out = "method,backbone,w_bits,a_bits,accuracy\n";
    char buf[160];
    for (const ResultRow& r : rows) {
        check(r.method.find(',') == std::string::npos &&
                  r.backbone.find(',') == std::string::npos,
              "result table: field contains a comma");
        std::snprintf(buf, sizeof buf, ",%d,%d,%.17g\n", r.w_bits, r.a_bits, r.accuracy);
        out += r.method + "," + r.backbone + buf;
    }
    return out;
}

ResultTable ResultTable::from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "result csv: empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check(line == "method,backbone,w_bits,a_bits,accuracy",
          "result csv: unexpected header '" + line + "'");
    ResultTable t;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[5];
        for (int i = 0; i < 5; ++i)
            check(static_cast<bool>(std::getline(ls, f[i], ',')), "result csv: short row");
        ResultRow r;
        r.method = f[0];
        r.backbone = f[1];
        r.w_bits = std::stoi(f[2]);
        r.a_bits = std::stoi(f[3]);
        r.accuracy = std::stod(f[4]);
        check(r.accuracy >= 0.0 && r.accuracy <= 100.0, "result csv: accuracy outside [0,100]");
        t.rows.push_back(r);
    }
    return t;
}

namespace {

quant::QuantPlan make_plan(quant::BitPair bits) {
    quant::QuantPlan plan;
    plan.bits = bits;
    return plan;
}

// Rows of `images` normalized into a batch tensor.
Tensor batch_tensor(const DatasetHandle& g, const float* images, int start, int count) {
    const size_t pp = g.pixels_per_image();
    Tensor x = Tensor::zeros({count, g.channels, g.image_size, g.image_size});
    float* dst = x.data_mut().data();
    std::memcpy(dst, images + static_cast<size_t>(start) * pp, count * pp * sizeof(float));
    for (int i = 0; i < count; ++i)
        normalize_image(dst + i * pp, g.channels, g.image_size, g.norm_mean.data(),
                        g.norm_std.data());
    return x;
}

float dropped_lr(const EvalProtocol& proto, int epoch) {
    float lr = proto.lr;
    for (int d : proto.lr_drops)
        if (epoch >= d) lr *= 0.1f;
    return lr;
}

int argmax_row(const float* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

// Top-1 on cached features, optionally through a PTQ'd head.
double head_accuracy(const std::vector<float>& feats, const std::vector<int>& labels, int dim,
                     const nn::ClassifierHead& head, quant::BitPair bits, bool quantize_head,
                     int batch_size) {
    NoGradGuard ng;
    const int n = static_cast<int>(labels.size());
    const int classes = head.bias.shape()[0];
    Tensor w = head.weight;
    if (quantize_head && !bits.fp())
        w = quant::quantize_dequantize(head.weight,
                                       quant::compute_qparams(head.weight.data(), bits.w));
    int hit = 0;
    for (int start = 0; start < n; start += batch_size) {
        int count = std::min(batch_size, n - start);
        Tensor xb = Tensor::from_data(
            {count, dim},
            std::vector<float>(feats.begin() + static_cast<size_t>(start) * dim,
                               feats.begin() + static_cast<size_t>(start + count) * dim));
        if (quantize_head && !bits.fp())
            xb = quant::quantize_dequantize(xb, quant::compute_qparams(xb.data(), bits.a));
        Tensor logits = linear(xb, w, head.bias);
        const float* lp = logits.data().data();
        for (int i = 0; i < count; ++i)
            if (argmax_row(lp + static_cast<size_t>(i) * classes, classes) == labels[start + i])
                ++hit;
    }
    return n == 0 ? 0.0 : 100.0 * hit / n;
}

nn::ClassifierHead train_head(const std::vector<float>& feats, const std::vector<int>& labels,
                              int dim, int classes, const EvalProtocol& proto) {
    nn::ClassifierHead head = nn::build_head(classes, dim, proto.seed);
    const int n = static_cast<int>(labels.size());
    Pcg32 rng = make_rng(proto.seed, RngStream::eval);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> vel_w(shape_numel(head.weight.shape()), 0.0f);
    std::vector<float> vel_b(shape_numel(head.bias.shape()), 0.0f);

    for (int epoch = 0; epoch < proto.epochs; ++epoch) {
        const float lr = dropped_lr(proto, epoch);
        rng.shuffle(order);
        for (int start = 0; start < n; start += proto.batch_size) {
            int count = std::min(proto.batch_size, n - start);
            std::vector<float> xb(static_cast<size_t>(count) * dim);
            std::vector<int> yb(count);
            for (int i = 0; i < count; ++i) {
                int src = order[start + i];
                std::memcpy(xb.data() + static_cast<size_t>(i) * dim,
                            feats.data() + static_cast<size_t>(src) * dim, dim * sizeof(float));
                yb[i] = labels[src];
            }
            Tensor x = Tensor::from_data({count, dim}, std::move(xb));
            Tensor logits = nn::forward_classifier(x, head);
            Tensor loss = softmax_cross_entropy(logits, yb);
            head.weight.zero_grad();
            head.bias.zero_grad();
            loss.backward();
            train::sgd_update(head.weight.data_mut().data(), head.weight.grad().data(),
                              vel_w.data(), vel_w.size(), lr, proto.momentum,
                              proto.weight_decay);
            train::sgd_update(head.bias.data_mut().data(), head.bias.grad().data(), vel_b.data(),
                              vel_b.size(), lr, proto.momentum, proto.weight_decay);
        }
    }
    return head;
}

nn::ClassifierHead head_from_params(nn::ModelParams& params) {
    check(params.has("head.weight") && params.has("head.bias"),
          "ptq_eval: model carries no classification head");
    return nn::ClassifierHead{params.at("head.weight"), params.at("head.bias")};
}

}  // namespace

std::vector<float> extract_features(const nn::ModelSpec& spec, nn::ModelParams& params,
                                    const DatasetHandle& geometry, const float* images,
                                    int count, quant::BitPair bits, int batch_size) {
    NoGradGuard ng;
    const int dim = spec.feature_dim();
    quant::QuantPlan plan = make_plan(bits);
    const quant::QuantPlan* plan_ptr = bits.fp() ? nullptr : &plan;
    std::vector<float> out(static_cast<size_t>(count) * dim);
    for (int start = 0; start < count; start += batch_size) {
        int b = std::min(batch_size, count - start);
        Tensor x = batch_tensor(geometry, images, start, b);
        Tensor f = nn::forward_backbone(spec, params, x, plan_ptr, false, false);
        std::memcpy(out.data() + static_cast<size_t>(start) * dim, f.data().data(),
                    static_cast<size_t>(b) * dim * sizeof(float));
    }
    return out;
}

double linear_probe(const nn::ModelSpec& spec, nn::ModelParams& params, const DatasetHandle& data,
                    quant::BitPair bits, const EvalProtocol& proto) {
    proto.validate();
    check(data.channels == spec.input_channels && data.image_size == spec.input_size,
          "linear_probe: dataset geometry does not match the model spec");
    const int dim = spec.feature_dim();
    std::vector<float> train_f = extract_features(spec, params, data, data.train_images.data(),
                                                  data.train_count(), bits, proto.batch_size);
    std::vector<float> test_f = extract_features(spec, params, data, data.test_images.data(),
                                                 data.test_count(), bits, proto.batch_size);
    nn::ClassifierHead head = train_head(train_f, data.train_labels, dim, data.num_classes, proto);
    return head_accuracy(test_f, data.test_labels, dim, head, bits, proto.quantize_head,
                         proto.batch_size);
}

nn::ModelParams finetune(const nn::ModelSpec& spec, const nn::ModelParams& params,
                         const DatasetHandle& data, const EvalProtocol& proto) {
    proto.validate();
    check(data.channels == spec.input_channels && data.image_size == spec.input_size,
          "finetune: dataset geometry does not match the model spec");
    nn::ModelParams model = params.clone();
    {
        nn::ClassifierHead head = nn::build_head(data.num_classes, spec.feature_dim(), proto.seed);
        model.add("head.weight", head.weight, true);
        model.add("head.bias", head.bias, true);
    }

    std::vector<std::vector<float>> velocity;
    for (const auto& item : model.items)
        if (item.trainable) velocity.emplace_back(shape_numel(item.tensor.shape()), 0.0f);

    Pcg32 rng_aug = make_rng(proto.seed, RngStream::augment);
    Pcg32 rng_shuffle = make_rng(proto.seed, RngStream::eval);
    AugmentConfig aug = AugmentConfig::finetune_default();
    const int n = data.train_count();
    const int c = data.channels, s = data.image_size;
    const size_t pp = data.pixels_per_image();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    nn::ClassifierHead head = head_from_params(model);
    for (int epoch = 0; epoch < proto.epochs; ++epoch) {
        const float lr = dropped_lr(proto, epoch);
        rng_shuffle.shuffle(order);
        std::vector<std::vector<int>> plan;
        for (int start = 0; start < n; start += proto.batch_size) {
            int end = std::min(start + proto.batch_size, n);
            plan.emplace_back(order.begin() + start, order.begin() + end);
        }
        if (plan.size() >= 2 && plan.back().size() < 2) {
            plan[plan.size() - 2].push_back(plan.back()[0]);
            plan.pop_back();
        }
        for (const auto& batch : plan) {
            const int b = static_cast<int>(batch.size());
            check(b >= 2, "finetune: degenerate batch under batchnorm");
            Tensor x = Tensor::zeros({b, c, s, s});
            float* dst = x.data_mut().data();
            std::vector<float> view(pp);
            for (int i = 0; i < b; ++i) {
                const float* src = data.train_image(batch[i]);
                if (proto.augment) {
                    augment_image(src, view.data(), c, s, aug, rng_aug);
                } else {
                    std::memcpy(view.data(), src, pp * sizeof(float));
                }
                normalize_image(view.data(), c, s, data.norm_mean.data(), data.norm_std.data());
                std::memcpy(dst + static_cast<size_t>(i) * pp, view.data(), pp * sizeof(float));
            }
            std::vector<int> yb(b);
            for (int i = 0; i < b; ++i) yb[i] = data.train_labels[batch[i]];

            Tensor feats = nn::forward_backbone(spec, model, x, nullptr, true, true);
            Tensor logits = nn::forward_classifier(feats, head);
            Tensor loss = softmax_cross_entropy(logits, yb);
            model.zero_grad();
            loss.backward();
            check(std::isfinite(loss.item()), "finetune: non-finite loss");

            size_t k = 0;
            for (auto& item : model.items) {
                if (!item.trainable) continue;
                std::vector<float>& v = velocity[k++];
                if (!item.tensor.has_grad()) continue;
                train::sgd_update(item.tensor.data_mut().data(), item.tensor.grad().data(),
                                  v.data(), v.size(), lr, proto.momentum, proto.weight_decay);
            }
        }
    }
    return model;
}

double ptq_eval(const nn::ModelSpec& spec, nn::ModelParams& model, const DatasetHandle& data,
                quant::BitPair bits, bool quantize_head) {
    NoGradGuard ng;
    nn::ClassifierHead head = head_from_params(model);
    const int dim = spec.feature_dim();
    std::vector<float> test_f = extract_features(spec, model, data, data.test_images.data(),
                                                 data.test_count(), bits, 128);
    return head_accuracy(test_f, data.test_labels, dim, head, bits, quantize_head, 128);
}

ResultTable sweep(const std::vector<SweepEntry>& entries, const DatasetHandle& data,
                  const EvalProtocol& proto) {
    proto.validate();
    ResultTable table;
    for (const SweepEntry& e : entries) {
        check(e.spec != nullptr && e.params != nullptr, "sweep: null entry");
        if (proto.mode == EvalProtocol::Mode::linear_eval) {
            for (quant::BitPair b : proto.bits) {
                ResultRow r;
                r.method = e.method;
                r.backbone = nn::backbone_name(e.spec->backbone);
                r.w_bits = b.w;
                r.a_bits = b.a;
                r.accuracy = linear_probe(*e.spec, *e.params, data, b, proto);
                table.rows.push_back(r);
            }
        } else {
            nn::ModelParams tuned = finetune(*e.spec, *e.params, data, proto);
            for (quant::BitPair b : proto.bits) {
                ResultRow r;
                r.method = e.method;
                r.backbone = nn::backbone_name(e.spec->backbone);
                r.w_bits = b.w;
                r.a_bits = b.a;
                r.accuracy = ptq_eval(*e.spec, tuned, data, b, proto.quantize_head);
                table.rows.push_back(r);
            }
        }
    }
    return table;
}

}  // namespace ssql::eval
