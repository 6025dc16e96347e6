#pragma once

#include <string>
#include <vector>

#include "ssql/data.hpp"
#include "ssql/nn.hpp"
#include "ssql/quant.hpp"

namespace ssql::eval {

// Linear evaluation trains only the classification head on frozen (and
// post-training-quantized) backbone features; finetune_ptq trains the full
// backbone+head in FP first and quantizes afterwards.
struct EvalProtocol {
    enum class Mode { linear_eval, finetune_ptq };
    Mode mode = Mode::linear_eval;

    std::vector<quant::BitPair> bits;  // sweep columns; (0,0) encodes FP

    int epochs = 100;
    float lr = 30.0f;
    std::vector<int> lr_drops{60, 80};  // divide lr by 10 entering these epochs
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    int batch_size = 128;
    bool augment = false;       // finetune recipe: pad-crop + flip
    bool quantize_head = false;  // sweeps quantize the backbone; head stays FP
    uint64_t seed = 0;

    static EvalProtocol linear_default();
    static EvalProtocol finetune_default();
    void validate() const;
};

std::string eval_mode_name(EvalProtocol::Mode m);
EvalProtocol::Mode parse_eval_mode(const std::string& name);

struct ResultRow {
    std::string method;
    std::string backbone;
    int w_bits = 0;  // 0,0 encodes FP
    int a_bits = 0;
    double accuracy = 0.0;  // percent
};

// CSV: method,backbone,w_bits,a_bits,accuracy.
struct ResultTable {
    std::vector<ResultRow> rows;
    std::string to_csv() const;
    static ResultTable from_csv(const std::string& csv);
};

// Backbone features for `count` images starting at `images`, extracted in
// fixed sequential batches (activation quantization is dynamic per batch, so
// the partition is part of the definition). Eval-mode BN, no augmentation.
std::vector<float> extract_features(const nn::ModelSpec& spec, nn::ModelParams& params,
                                    const DatasetHandle& geometry, const float* images,
                                    int count, quant::BitPair bits, int batch_size);

// Fig. 2 left path: freeze + PTQ the backbone at `bits`, train a linear head
// on cached features, return top-1 test accuracy in percent.
double linear_probe(const nn::ModelSpec& spec, nn::ModelParams& params, const DatasetHandle& data,
                    quant::BitPair bits, const EvalProtocol& proto);

// Fig. 2 right path, stage 1: supervised fine-tune of backbone + fresh head
// in full precision. Returns the tuned parameters with head.weight/head.bias
// appended. The input params are not modified.
nn::ModelParams finetune(const nn::ModelSpec& spec, const nn::ModelParams& params,
                         const DatasetHandle& data, const EvalProtocol& proto);

// Fig. 2 right path, stage 2: PTQ of a fine-tuned model (must carry
// head.weight/head.bias), top-1 test accuracy in percent. No weight updates.
double ptq_eval(const nn::ModelSpec& spec, nn::ModelParams& model, const DatasetHandle& data,
                quant::BitPair bits, bool quantize_head = false);

struct SweepEntry {
    std::string method;
    const nn::ModelSpec* spec = nullptr;
    nn::ModelParams* params = nullptr;
};

// Cartesian (checkpoint x bits) evaluation per proto.mode.
ResultTable sweep(const std::vector<SweepEntry>& entries, const DatasetHandle& data,
                  const EvalProtocol& proto);

}  // namespace ssql::eval
