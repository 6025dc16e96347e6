#pragma once

#include <map>
#include <string>

#include "ssql/data.hpp"
#include "ssql/eval.hpp"
#include "ssql/nn.hpp"
#include "ssql/train.hpp"

namespace ssql::config {

// Flat key=value text. '#' starts a comment, blank lines are skipped,
// whitespace around key and value is trimmed. Duplicate keys in one file are
// rejected; later set() calls (flag overrides) replace freely.
using Map = std::map<std::string, std::string>;

Map parse(const std::string& text);
Map load_file(const std::string& path);
void set(Map& m, const std::string& key, const std::string& value);

// Key families: train fields at the top level plus loss.*, bits.*,
// augment.*; model.*; eval.*; synthetic.*; data.*. Unknown keys throw.
void check_known(const Map& m);

void apply_train(const Map& m, train::TrainConfig& cfg);
void apply_model(const Map& m, nn::ModelSpec& spec);
void apply_eval(const Map& m, eval::EvalProtocol& proto);
void apply_synthetic(const Map& m, SyntheticSpec& spec);

struct DataOptions {
    int subset = 0;  // 0 keeps the full train split
    uint64_t subset_seed = 0;
    bool synthetic = false;
};
void apply_data(const Map& m, DataOptions& opts);

uint64_t get_u64(const Map& m, const std::string& key, uint64_t fallback);

// Canonical serialization: every train-family key, fixed order, lossless
// float formatting. Used verbatim inside checkpoints.
std::string train_to_text(const train::TrainConfig& cfg);
train::TrainConfig train_from_text(const std::string& text);

}  // namespace ssql::config
