#pragma once

#include <string>
#include <vector>

#include "omoq/checkpoint.hpp"
#include "omoq/dataset.hpp"
#include "omoq/selection.hpp"

namespace omoq {

struct TrainConfig {
    ModelFamily family = ModelFamily::rnn_ft;
    CellType cell = CellType::gru; // FF models only; FT is always GRU
    size_t directions = 2;
    StandardizeMode standardize = StandardizeMode::none;
    size_t epochs = 0;     // 0 -> family default (CNN 100, RNN 60)
    size_t batch_size = 0; // 0 -> family default (CNN 132, RNN 48)
    double lr = 1e-4;
    double weight_decay = 0.01;
    double dropout = 0.10;
    uint32_t seed = 0;
    SegmentPolicy policy = SegmentPolicy::full; // CNN always trains on random segments
    size_t eval_segments = 16;
    bool lr_fallback = true; // restart at 1e-5 when val loss stalls in the first 10 epochs
    size_t hidden_override = 0;
    Collapse collapse = Collapse::mean;
    double val_fraction = 0.1; // used when the manifest has no val rows
    size_t cnn_channels = 1;
    size_t eval_chunk = 0; // 0 -> family default
    std::string out_dir;   // empty -> no files written
    bool save_final = false;
    bool quiet = false;
};

struct EpochRecord {
    uint32_t epoch = 0; // 1-based
    SplitMetrics metrics;
    double dist = 0.0;
    double train_loss = 0.0; // mean per-batch backprop loss, [0,1] scale
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    uint32_t best_epoch = 0;
    double best_dist = 0.0;
    SplitMetrics best_metrics;
    std::string best_checkpoint;
    std::string metrics_csv;
    std::string selection_csv;
    bool lr_fallback_triggered = false;
};

TrainResult train_model(Manifest manifest, FeatureProvider& provider, const TrainConfig& cfg);

// OMOS on [1, 5] for precomputed features (standardization applied inside).
double predict_clip(ModelBundle& bundle, const FeatureMatrix& raw_features);

// decode -> trim -> features per the bundle's configuration -> OMOS.
double predict_wav(ModelBundle& bundle, const std::string& wav_path, const TrimConfig& trim = {});

} // namespace omoq
