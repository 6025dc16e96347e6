#include "ssql/nn.hpp"

#include <cmath>
#include <sstream>

namespace ssql::nn {

std::string backbone_name(Backbone b) {
    return b == Backbone::tiny_cnn ? "tiny_cnn" : "mlp";
}

Backbone parse_backbone(const std::string& name) {
    if (name == "tiny_cnn") return Backbone::tiny_cnn;
    if (name == "mlp") return Backbone::mlp;
    throw Error("unknown backbone '" + name + "'");
}

int ModelSpec::feature_dim() const {
    if (backbone == Backbone::tiny_cnn) return channels.back();
    if (mlp_widths.empty()) return input_channels * input_size * input_size;
    return mlp_widths.back();
}

void ModelSpec::validate() const {
    check(input_channels >= 1 && input_size >= 1, "model spec: bad input dims");
    check(projection_hidden >= 1 && projection_dim >= 1 && predictor_hidden >= 1,
          "model spec: projection/predictor dims must be positive");
    if (backbone == Backbone::tiny_cnn) {
        check(!channels.empty(), "model spec: tiny_cnn needs at least one stage");
        int size = input_size;
        for (size_t i = 0; i < channels.size(); ++i) {
            check(channels[i] >= 1, "model spec: channel count must be positive");
            check(size >= 2 && size % 2 == 0,
                  "model spec: input_size " + std::to_string(input_size) + " does not survive " +
                      std::to_string(channels.size()) + " pooling stages");
            size /= 2;
        }
    } else {
        for (int w : mlp_widths) check(w >= 1, "model spec: mlp width must be positive");
    }
}

static std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

static std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

std::string ModelSpec::to_text() const {
    std::ostringstream os;
    os << "backbone=" << backbone_name(backbone) << ";input_channels=" << input_channels
       << ";input_size=" << input_size << ";channels=" << join_ints(channels)
       << ";mlp_widths=" << join_ints(mlp_widths) << ";projection_hidden=" << projection_hidden
       << ";projection_dim=" << projection_dim << ";predictor_hidden=" << predictor_hidden;
    return os.str();
}

ModelSpec ModelSpec::from_text(const std::string& text) {
    ModelSpec spec;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ';')) {
        auto eq = field.find('=');
        check(eq != std::string::npos, "bad model spec field '" + field + "'");
        std::string key = field.substr(0, eq);
        std::string val = field.substr(eq + 1);
        try {
            if (key == "backbone")
                spec.backbone = parse_backbone(val);
            else if (key == "input_channels")
                spec.input_channels = std::stoi(val);
            else if (key == "input_size")
                spec.input_size = std::stoi(val);
            else if (key == "channels")
                spec.channels = split_ints(val);
            else if (key == "mlp_widths")
                spec.mlp_widths = split_ints(val);
            else if (key == "projection_hidden")
                spec.projection_hidden = std::stoi(val);
            else if (key == "projection_dim")
                spec.projection_dim = std::stoi(val);
            else if (key == "predictor_hidden")
                spec.predictor_hidden = std::stoi(val);
            else
                throw Error("unknown model spec key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw Error("bad model spec value in '" + field + "'");
        }
    }
    spec.validate();
    return spec;
}

// ---- ModelParams ----

void ModelParams::add(const std::string& name, Tensor t, bool trainable) {
    check(!index_.count(name), "duplicate parameter '" + name + "'");
    index_[name] = items.size();
    items.push_back(NamedTensor{name, std::move(t), trainable});
}

bool ModelParams::has(const std::string& name) const { return index_.count(name) != 0; }

Tensor& ModelParams::at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter '" + name + "'");
    return items[it->second].tensor;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter '" + name + "'");
    return items[it->second].tensor;
}

size_t ModelParams::trainable_count() const {
    size_t n = 0;
    for (const auto& item : items)
        if (item.trainable) n += item.tensor.numel();
    return n;
}

void ModelParams::zero_grad() {
    for (auto& item : items)
        if (item.trainable) item.tensor.zero_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    for (const auto& item : items) {
        Tensor t = Tensor::from_data(item.tensor.shape(),
                                     {item.tensor.data().begin(), item.tensor.data().end()},
                                     item.tensor.requires_grad());
        out.add(item.name, std::move(t), item.trainable);
    }
    return out;
}

// ---- construction ----

static Tensor kaiming_uniform(Shape shape, int fan_in, Pcg32& rng) {
    float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

static void add_bn(ModelParams& p, const std::string& prefix, int c) {
    p.add(prefix + ".gamma", Tensor::ones({c}, true), true);
    p.add(prefix + ".beta", Tensor::zeros({c}, true), true);
    p.add(prefix + ".running_mean", Tensor::zeros({c}), false);
    p.add(prefix + ".running_var", Tensor::ones({c}), false);
}

ModelParams build_model(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    Pcg32 rng = make_rng(seed, RngStream::init);
    ModelParams p;

    if (spec.backbone == Backbone::tiny_cnn) {
        int cin = spec.input_channels;
        for (size_t i = 0; i < spec.channels.size(); ++i) {
            int cout = spec.channels[i];
            std::string stage = "backbone.stage" + std::to_string(i);
            p.add(stage + ".conv.weight",
                  kaiming_uniform({cout, cin, 3, 3}, cin * 9, rng), true);
            add_bn(p, stage + ".bn", cout);
            cin = cout;
        }
    } else {
        int in = spec.input_channels * spec.input_size * spec.input_size;
        for (size_t i = 0; i < spec.mlp_widths.size(); ++i) {
            int out = spec.mlp_widths[i];
            std::string layer = "backbone.fc" + std::to_string(i);
            p.add(layer + ".weight", kaiming_uniform({out, in}, in, rng), true);
            add_bn(p, layer + ".bn", out);
            in = out;
        }
    }

    int feat = spec.feature_dim();
    p.add("projection.fc1.weight",
          kaiming_uniform({spec.projection_hidden, feat}, feat, rng), true);
    add_bn(p, "projection.bn1", spec.projection_hidden);
    p.add("projection.fc2.weight",
          kaiming_uniform({spec.projection_dim, spec.projection_hidden}, spec.projection_hidden,
                          rng),
          true);
    add_bn(p, "projection.bn2", spec.projection_dim);

    p.add("predictor.fc1.weight",
          kaiming_uniform({spec.predictor_hidden, spec.projection_dim}, spec.projection_dim, rng),
          true);
    add_bn(p, "predictor.bn1", spec.predictor_hidden);
    p.add("predictor.fc2.weight",
          kaiming_uniform({spec.projection_dim, spec.predictor_hidden}, spec.predictor_hidden,
                          rng),
          true);
    p.add("predictor.fc2.bias", Tensor::zeros({spec.projection_dim}, true), true);

    return p;
}

// ---- forwards ----

static Tensor maybe_fq_act(const Tensor& x, const quant::QuantPlan* plan) {
    if (plan && plan->bits.a > 0 && plan->quantize_acts) return quant::fake_quant(x, plan->bits.a);
    return x;
}

static Tensor maybe_fq_weight(const Tensor& w, const quant::QuantPlan* plan) {
    if (plan && plan->bits.w > 0 && plan->quantize_weights)
        return quant::fake_quant(w, plan->bits.w);
    return w;
}

static Tensor bn_layer(ModelParams& params, const std::string& prefix, const Tensor& x,
                       bool train, bool update_stats) {
    return batchnorm(x, params.at(prefix + ".gamma"), params.at(prefix + ".beta"),
                     params.at(prefix + ".running_mean"), params.at(prefix + ".running_var"),
                     train, update_stats);
}

Tensor forward_backbone(const ModelSpec& spec, ModelParams& params, const Tensor& x,
                        const quant::QuantPlan* plan, bool train, bool update_stats) {
    if (spec.backbone == Backbone::tiny_cnn) {
        check(x.ndim() == 4 && x.dim(1) == spec.input_channels && x.dim(2) == spec.input_size &&
                  x.dim(3) == spec.input_size,
              "backbone input shape " + shape_str(x.shape()) + " does not match spec");
        Tensor h = x;
        for (size_t i = 0; i < spec.channels.size(); ++i) {
            std::string stage = "backbone.stage" + std::to_string(i);
            h = conv2d(maybe_fq_act(h, plan),
                       maybe_fq_weight(params.at(stage + ".conv.weight"), plan), Tensor(), 1, 1);
            h = bn_layer(params, stage + ".bn", h, train, update_stats);
            h = relu(h);
            h = avgpool2d(h, 2, 2);
        }
        return global_avgpool(h);
    }
    check(x.ndim() >= 2 && x.dim(0) >= 1, "backbone input must be batched");
    size_t flat = x.numel() / static_cast<size_t>(x.dim(0));
    check(flat == static_cast<size_t>(spec.input_channels) * spec.input_size * spec.input_size,
          "backbone input shape " + shape_str(x.shape()) + " does not match spec");
    Tensor h = flatten(x);
    for (size_t i = 0; i < spec.mlp_widths.size(); ++i) {
        std::string layer = "backbone.fc" + std::to_string(i);
        h = linear(maybe_fq_act(h, plan), maybe_fq_weight(params.at(layer + ".weight"), plan),
                   Tensor());
        h = bn_layer(params, layer + ".bn", h, train, update_stats);
        h = relu(h);
    }
    return h;
}

Tensor forward_projection(const ModelSpec& spec, ModelParams& params, const Tensor& feat,
                          const quant::QuantPlan* plan, bool train, bool update_stats) {
    check(feat.ndim() == 2 && feat.dim(1) == spec.feature_dim(),
          "projection input " + shape_str(feat.shape()) + " does not match feature dim");
    Tensor h = linear(maybe_fq_act(feat, plan),
                      maybe_fq_weight(params.at("projection.fc1.weight"), plan), Tensor());
    h = bn_layer(params, "projection.bn1", h, train, update_stats);
    h = relu(h);
    h = linear(maybe_fq_act(h, plan), maybe_fq_weight(params.at("projection.fc2.weight"), plan),
               Tensor());
    return bn_layer(params, "projection.bn2", h, train, update_stats);
}

Tensor forward_encoder(const ModelSpec& spec, ModelParams& params, const Tensor& x,
                       const quant::QuantPlan* plan, bool train, bool update_stats) {
    return forward_projection(spec, params, forward_backbone(spec, params, x, plan, train, update_stats),
                              plan, train, update_stats);
}

Tensor forward_predictor(const ModelSpec& spec, ModelParams& params, const Tensor& z,
                         bool train, bool update_stats) {
    check(z.ndim() == 2 && z.dim(1) == spec.projection_dim,
          "predictor input " + shape_str(z.shape()) + " does not match projection dim");
    Tensor h = linear(z, params.at("predictor.fc1.weight"), Tensor());
    h = bn_layer(params, "predictor.bn1", h, train, update_stats);
    h = relu(h);
    return linear(h, params.at("predictor.fc2.weight"), params.at("predictor.fc2.bias"));
}

ClassifierHead build_head(int classes, int feat_dim, uint64_t seed) {
    check(classes >= 2 && feat_dim >= 1, "classifier head needs classes >= 2, feat >= 1");
    Pcg32 rng = make_rng(seed, RngStream::init);
    ClassifierHead head;
    head.weight = kaiming_uniform({classes, feat_dim}, feat_dim, rng);
    head.bias = Tensor::zeros({classes}, true);
    return head;
}

Tensor forward_classifier(const Tensor& features, const ClassifierHead& head) {
    return linear(features, head.weight, head.bias);
}

std::vector<std::pair<std::string, Tensor>> quantized_weight_set(const ModelSpec& spec,
                                                                 const ModelParams& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    if (spec.backbone == Backbone::tiny_cnn) {
        for (size_t i = 0; i < spec.channels.size(); ++i) {
            std::string name = "backbone.stage" + std::to_string(i) + ".conv.weight";
            out.emplace_back(name, params.at(name));
        }
    } else {
        for (size_t i = 0; i < spec.mlp_widths.size(); ++i) {
            std::string name = "backbone.fc" + std::to_string(i) + ".weight";
            out.emplace_back(name, params.at(name));
        }
    }
    out.emplace_back("projection.fc1.weight", params.at("projection.fc1.weight"));
    out.emplace_back("projection.fc2.weight", params.at("projection.fc2.weight"));
    return out;
}

std::vector<std::pair<std::string, Tensor>> weight_matrices(const ModelParams& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& item : params.items)
        if (item.trainable && item.tensor.ndim() >= 2 &&
            item.name.size() >= 7 && item.name.substr(item.name.size() - 7) == ".weight")
            out.emplace_back(item.name, item.tensor);
    return out;
}

}  // namespace ssql::nn
