#include "ssql/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace ssql::config {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
    throw Error("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "a bool (true/false/1/0)");
}

int parse_int(const std::string& key, const std::string& v) {
    size_t pos = 0;
    int out = 0;
    try {
        out = std::stoi(v, &pos);
    } catch (const std::exception&) {
        bad_value(key, v, "an integer");
    }
    if (pos != v.size()) bad_value(key, v, "an integer");
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    size_t pos = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        bad_value(key, v, "an unsigned integer");
    }
    if (pos != v.size()) bad_value(key, v, "an unsigned integer");
    return out;
}

float parse_float(const std::string& key, const std::string& v) {
    size_t pos = 0;
    float out = 0.0f;
    try {
        out = std::stof(v, &pos);
    } catch (const std::exception&) {
        bad_value(key, v, "a number");
    }
    if (pos != v.size()) bad_value(key, v, "a number");
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    return out;
}

std::string fmt_f(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string fmt_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

template <typename F>
bool take(const Map& m, const std::string& key, F&& f) {
    auto it = m.find(key);
    if (it == m.end()) return false;
    f(it->second);
    return true;
}

const char* const kTrainKeys[] = {
    "epochs", "batch_size", "base_lr", "lr_scale_linear", "momentum", "weight_decay", "seed",
    "snapshot_every", "loss.variant", "loss.temperature", "loss.quantize_prediction",
    "loss.quantize_target", "loss.nce_aux", "loss.nce_fp_negatives", "bits.weights", "bits.acts",
    "augment.crop", "augment.crop_scale_min", "augment.crop_scale_max", "augment.crop_ratio_min",
    "augment.crop_ratio_max", "augment.pad_crop", "augment.pad", "augment.hflip_p",
    "augment.jitter_p", "augment.brightness", "augment.contrast", "augment.saturation",
    "augment.hue", "augment.grayscale_p"};

const char* const kModelKeys[] = {"model.backbone",          "model.input_channels",
                                  "model.input_size",        "model.channels",
                                  "model.mlp_widths",        "model.projection_hidden",
                                  "model.projection_dim",    "model.predictor_hidden"};

const char* const kEvalKeys[] = {"eval.mode",         "eval.bits",       "eval.epochs",
                                 "eval.lr",           "eval.lr_drops",   "eval.momentum",
                                 "eval.weight_decay", "eval.batch_size", "eval.augment",
                                 "eval.quantize_head", "eval.seed"};

const char* const kSyntheticKeys[] = {"synthetic.classes",        "synthetic.train_per_class",
                                      "synthetic.test_per_class", "synthetic.image_size",
                                      "synthetic.channels",       "synthetic.blobs_per_class",
                                      "synthetic.separation",     "synthetic.noise_std",
                                      "synthetic.seed"};

const char* const kDataKeys[] = {"data.subset", "data.subset_seed", "data.synthetic"};

}  // namespace

Map parse(const std::string& text) {
    Map m;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
        if (m.count(key))
            throw Error("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        m[key] = value;
    }
    return m;
}

Map load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void set(Map& m, const std::string& key, const std::string& value) { m[key] = value; }

void check_known(const Map& m) {
    auto known = [](const std::string& k) {
        for (const char* t : kTrainKeys)
            if (k == t) return true;
        for (const char* t : kModelKeys)
            if (k == t) return true;
        for (const char* t : kEvalKeys)
            if (k == t) return true;
        for (const char* t : kSyntheticKeys)
            if (k == t) return true;
        for (const char* t : kDataKeys)
            if (k == t) return true;
        return false;
    };
    for (const auto& [k, v] : m)
        if (!known(k)) throw Error("unknown config key: '" + k + "'");
}

void apply_train(const Map& m, train::TrainConfig& cfg) {
    take(m, "epochs", [&](const std::string& v) { cfg.epochs = parse_int("epochs", v); });
    take(m, "batch_size",
         [&](const std::string& v) { cfg.batch_size = parse_int("batch_size", v); });
    take(m, "base_lr", [&](const std::string& v) { cfg.base_lr = parse_float("base_lr", v); });
    take(m, "lr_scale_linear",
         [&](const std::string& v) { cfg.lr_scale_linear = parse_bool("lr_scale_linear", v); });
    take(m, "momentum", [&](const std::string& v) { cfg.momentum = parse_float("momentum", v); });
    take(m, "weight_decay",
         [&](const std::string& v) { cfg.weight_decay = parse_float("weight_decay", v); });
    take(m, "seed", [&](const std::string& v) { cfg.seed = parse_u64("seed", v); });
    take(m, "snapshot_every",
         [&](const std::string& v) { cfg.snapshot_every = parse_int("snapshot_every", v); });

    take(m, "loss.variant",
         [&](const std::string& v) { cfg.loss.variant = ssl::parse_loss_variant(v); });
    take(m, "loss.temperature",
         [&](const std::string& v) { cfg.loss.temperature = parse_float("loss.temperature", v); });
    take(m, "loss.quantize_prediction", [&](const std::string& v) {
        cfg.loss.quantize_prediction = parse_bool("loss.quantize_prediction", v);
    });
    take(m, "loss.quantize_target", [&](const std::string& v) {
        cfg.loss.quantize_target = parse_bool("loss.quantize_target", v);
    });
    take(m, "loss.nce_aux",
         [&](const std::string& v) { cfg.loss.nce_aux = parse_bool("loss.nce_aux", v); });
    take(m, "loss.nce_fp_negatives", [&](const std::string& v) {
        cfg.loss.nce_fp_negatives = parse_bool("loss.nce_fp_negatives", v);
    });

    take(m, "bits.weights",
         [&](const std::string& v) { cfg.bits.weight_bits = quant::parse_bit_set(v); });
    take(m, "bits.acts", [&](const std::string& v) { cfg.bits.act_bits = quant::parse_bit_set(v); });

    auto& a = cfg.augment;
    take(m, "augment.crop", [&](const std::string& v) { a.crop = parse_bool("augment.crop", v); });
    take(m, "augment.crop_scale_min", [&](const std::string& v) {
        a.crop_scale_min = parse_float("augment.crop_scale_min", v);
    });
    take(m, "augment.crop_scale_max", [&](const std::string& v) {
        a.crop_scale_max = parse_float("augment.crop_scale_max", v);
    });
    take(m, "augment.crop_ratio_min", [&](const std::string& v) {
        a.crop_ratio_min = parse_float("augment.crop_ratio_min", v);
    });
    take(m, "augment.crop_ratio_max", [&](const std::string& v) {
        a.crop_ratio_max = parse_float("augment.crop_ratio_max", v);
    });
    take(m, "augment.pad_crop",
         [&](const std::string& v) { a.pad_crop = parse_bool("augment.pad_crop", v); });
    take(m, "augment.pad", [&](const std::string& v) { a.pad = parse_int("augment.pad", v); });
    take(m, "augment.hflip_p",
         [&](const std::string& v) { a.hflip_p = parse_float("augment.hflip_p", v); });
    take(m, "augment.jitter_p",
         [&](const std::string& v) { a.jitter_p = parse_float("augment.jitter_p", v); });
    take(m, "augment.brightness",
         [&](const std::string& v) { a.brightness = parse_float("augment.brightness", v); });
    take(m, "augment.contrast",
         [&](const std::string& v) { a.contrast = parse_float("augment.contrast", v); });
    take(m, "augment.saturation",
         [&](const std::string& v) { a.saturation = parse_float("augment.saturation", v); });
    take(m, "augment.hue", [&](const std::string& v) { a.hue = parse_float("augment.hue", v); });
    take(m, "augment.grayscale_p",
         [&](const std::string& v) { a.grayscale_p = parse_float("augment.grayscale_p", v); });
}

void apply_model(const Map& m, nn::ModelSpec& spec) {
    take(m, "model.backbone",
         [&](const std::string& v) { spec.backbone = nn::parse_backbone(v); });
    take(m, "model.input_channels", [&](const std::string& v) {
        spec.input_channels = parse_int("model.input_channels", v);
    });
    take(m, "model.input_size",
         [&](const std::string& v) { spec.input_size = parse_int("model.input_size", v); });
    take(m, "model.channels",
         [&](const std::string& v) { spec.channels = parse_int_list("model.channels", v); });
    take(m, "model.mlp_widths",
         [&](const std::string& v) { spec.mlp_widths = parse_int_list("model.mlp_widths", v); });
    take(m, "model.projection_hidden", [&](const std::string& v) {
        spec.projection_hidden = parse_int("model.projection_hidden", v);
    });
    take(m, "model.projection_dim", [&](const std::string& v) {
        spec.projection_dim = parse_int("model.projection_dim", v);
    });
    take(m, "model.predictor_hidden", [&](const std::string& v) {
        spec.predictor_hidden = parse_int("model.predictor_hidden", v);
    });
}

void apply_eval(const Map& m, eval::EvalProtocol& proto) {
    take(m, "eval.mode", [&](const std::string& v) { proto.mode = eval::parse_eval_mode(v); });
    take(m, "eval.bits", [&](const std::string& v) { proto.bits = quant::parse_bits_list(v); });
    take(m, "eval.epochs",
         [&](const std::string& v) { proto.epochs = parse_int("eval.epochs", v); });
    take(m, "eval.lr", [&](const std::string& v) { proto.lr = parse_float("eval.lr", v); });
    take(m, "eval.lr_drops",
         [&](const std::string& v) { proto.lr_drops = parse_int_list("eval.lr_drops", v); });
    take(m, "eval.momentum",
         [&](const std::string& v) { proto.momentum = parse_float("eval.momentum", v); });
    take(m, "eval.weight_decay",
         [&](const std::string& v) { proto.weight_decay = parse_float("eval.weight_decay", v); });
    take(m, "eval.batch_size",
         [&](const std::string& v) { proto.batch_size = parse_int("eval.batch_size", v); });
    take(m, "eval.augment",
         [&](const std::string& v) { proto.augment = parse_bool("eval.augment", v); });
    take(m, "eval.quantize_head",
         [&](const std::string& v) { proto.quantize_head = parse_bool("eval.quantize_head", v); });
    take(m, "eval.seed", [&](const std::string& v) { proto.seed = parse_u64("eval.seed", v); });
}

void apply_synthetic(const Map& m, SyntheticSpec& spec) {
    take(m, "synthetic.classes",
         [&](const std::string& v) { spec.num_classes = parse_int("synthetic.classes", v); });
    take(m, "synthetic.train_per_class", [&](const std::string& v) {
        spec.train_per_class = parse_int("synthetic.train_per_class", v);
    });
    take(m, "synthetic.test_per_class", [&](const std::string& v) {
        spec.test_per_class = parse_int("synthetic.test_per_class", v);
    });
    take(m, "synthetic.image_size",
         [&](const std::string& v) { spec.image_size = parse_int("synthetic.image_size", v); });
    take(m, "synthetic.channels",
         [&](const std::string& v) { spec.channels = parse_int("synthetic.channels", v); });
    take(m, "synthetic.blobs_per_class", [&](const std::string& v) {
        spec.blobs_per_class = parse_int("synthetic.blobs_per_class", v);
    });
    take(m, "synthetic.separation",
         [&](const std::string& v) { spec.separation = parse_float("synthetic.separation", v); });
    take(m, "synthetic.noise_std",
         [&](const std::string& v) { spec.noise_std = parse_float("synthetic.noise_std", v); });
}

void apply_data(const Map& m, DataOptions& opts) {
    take(m, "data.subset",
         [&](const std::string& v) { opts.subset = parse_int("data.subset", v); });
    take(m, "data.subset_seed",
         [&](const std::string& v) { opts.subset_seed = parse_u64("data.subset_seed", v); });
    take(m, "data.synthetic",
         [&](const std::string& v) { opts.synthetic = parse_bool("data.synthetic", v); });
}

uint64_t get_u64(const Map& m, const std::string& key, uint64_t fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : parse_u64(key, it->second);
}

std::string train_to_text(const train::TrainConfig& cfg) {
    std::string out;
    auto kv = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
    kv("epochs", std::to_string(cfg.epochs));
    kv("batch_size", std::to_string(cfg.batch_size));
    kv("base_lr", fmt_f(cfg.base_lr));
    kv("lr_scale_linear", cfg.lr_scale_linear ? "true" : "false");
    kv("momentum", fmt_f(cfg.momentum));
    kv("weight_decay", fmt_f(cfg.weight_decay));
    kv("seed", std::to_string(cfg.seed));
    kv("snapshot_every", std::to_string(cfg.snapshot_every));
    kv("loss.variant", ssl::loss_variant_name(cfg.loss.variant));
    kv("loss.temperature", fmt_f(cfg.loss.temperature));
    kv("loss.quantize_prediction", cfg.loss.quantize_prediction ? "true" : "false");
    kv("loss.quantize_target", cfg.loss.quantize_target ? "true" : "false");
    kv("loss.nce_aux", cfg.loss.nce_aux ? "true" : "false");
    kv("loss.nce_fp_negatives", cfg.loss.nce_fp_negatives ? "true" : "false");
    kv("bits.weights", fmt_list(cfg.bits.weight_bits));
    kv("bits.acts", fmt_list(cfg.bits.act_bits));
    const auto& a = cfg.augment;
    kv("augment.crop", a.crop ? "true" : "false");
    kv("augment.crop_scale_min", fmt_f(a.crop_scale_min));
    kv("augment.crop_scale_max", fmt_f(a.crop_scale_max));
    kv("augment.crop_ratio_min", fmt_f(a.crop_ratio_min));
    kv("augment.crop_ratio_max", fmt_f(a.crop_ratio_max));
    kv("augment.pad_crop", a.pad_crop ? "true" : "false");
    kv("augment.pad", std::to_string(a.pad));
    kv("augment.hflip_p", fmt_f(a.hflip_p));
    kv("augment.jitter_p", fmt_f(a.jitter_p));
    kv("augment.brightness", fmt_f(a.brightness));
    kv("augment.contrast", fmt_f(a.contrast));
    kv("augment.saturation", fmt_f(a.saturation));
    kv("augment.hue", fmt_f(a.hue));
    kv("augment.grayscale_p", fmt_f(a.grayscale_p));
    return out;
}

train::TrainConfig train_from_text(const std::string& text) {
    Map m = parse(text);
    for (const auto& [k, v] : m) {
        bool ok = false;
        for (const char* t : kTrainKeys)
            if (k == t) ok = true;
        if (!ok) throw Error("unknown train config key: '" + k + "'");
    }
    train::TrainConfig cfg;
    apply_train(m, cfg);
    return cfg;
}

}  // namespace ssql::config
