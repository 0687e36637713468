#pragma once

#include <cstdint>
#include <string>

namespace omoq {

// Labelled toy dataset: harmonic tones mixed with noise at a controlled
// level; the synthetic opinion score is monotone in the degradation level.
// This is a self-contained fixture for the training loop and metrics, not a
// simulator of time-scale-modification artifacts.
struct SynthConfig {
    std::string out_dir;
    size_t count = 200;
    uint32_t seed = 1;
    uint32_t sample_rate = 44100;
    double dur_min = 0.9; // seconds of tonal content (pre-padding)
    double dur_max = 1.4;
    double train_frac = 0.8;
    double val_frac = 0.1; // remainder is the test split
};

struct SynthResult {
    std::string manifest_path;
    size_t count = 0;
};

SynthResult generate_synthetic_dataset(const SynthConfig& cfg);

} // namespace omoq
