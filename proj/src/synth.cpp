#include "omoq/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "omoq/csv.hpp"
#include "omoq/dataset.hpp"
#include "omoq/errors.hpp"
#include "omoq/rng.hpp"
#include "omoq/wav.hpp"

namespace omoq {

namespace {
constexpr double kTwoPi = 6.283185307179586;

const char* kMethods[3] = {"synthA", "synthB", "synthC"};
const char* kClasses[3] = {"Musical", "Solo", "Voice"};
const char* kBetaTags[5] = {"0.5", "0.8", "1", "1.5", "0.2257"};
} // namespace

SynthResult generate_synthetic_dataset(const SynthConfig& cfg) {
    require(cfg.count >= 2, "synth: need at least two clips");
    require(cfg.dur_min > 0.2 && cfg.dur_max >= cfg.dur_min, "synth: bad duration range");
    require(cfg.train_frac + cfg.val_frac <= 1.0, "synth: split fractions exceed 1");
    std::filesystem::create_directories(cfg.out_dir);

    // Degradation grid spanning [0, 1], shuffled so every split sees the
    // whole label range.
    std::vector<double> degradation(cfg.count);
    for (size_t i = 0; i < cfg.count; ++i)
        degradation[i] = static_cast<double>(i) / static_cast<double>(cfg.count - 1);
    Rng shuffle_rng = Rng::stream(cfg.seed, 0, 0xA11);
    shuffle_rng.shuffle(degradation.begin(), degradation.end());

    const size_t n_train = static_cast<size_t>(std::round(cfg.train_frac * cfg.count));
    const size_t n_val = static_cast<size_t>(std::round(cfg.val_frac * cfg.count));

    Manifest manifest;
    for (size_t i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::stream(cfg.seed, static_cast<uint32_t>(i), 0xC11);
        const double d = degradation[i];
        const double dur = rng.uniform(cfg.dur_min, cfg.dur_max);
        const size_t content = static_cast<size_t>(dur * cfg.sample_rate);
        const size_t pad = static_cast<size_t>(rng.uniform(0.05, 0.12) * cfg.sample_rate);

        const double f0 = rng.uniform(110.0, 880.0);
        const int harmonics = 3 + static_cast<int>(rng.uniform_index(3));
        std::vector<double> amps(harmonics);
        for (int h = 0; h < harmonics; ++h)
            amps[h] = rng.uniform(0.4, 1.0) / static_cast<double>(h + 1);
        const double am_rate = rng.uniform(2.0, 6.0);
        const double noise_mix = 0.05 + 0.9 * d;

        std::vector<float> samples(pad + content + pad, 0.0f);
        const double sr = static_cast<double>(cfg.sample_rate);
        for (size_t t = 0; t < content; ++t) {
            const double time = static_cast<double>(t) / sr;
            double tone = 0.0;
            for (int h = 0; h < harmonics; ++h)
                tone += amps[h] * std::sin(kTwoPi * f0 * (h + 1) * time);
            tone *= 0.7 + 0.3 * std::sin(kTwoPi * am_rate * time);
            // Short fades keep the content from starting with a click.
            const double fade = std::min({1.0, time * 200.0, (dur - time) * 200.0});
            const double noise = rng.uniform(-1.0, 1.0);
            samples[pad + t] = static_cast<float>(
                fade * ((1.0 - noise_mix) * tone * 0.35 + noise_mix * noise * 0.8));
        }

        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04zu.wav", i);
        const std::string path = cfg.out_dir + "/" + name;
        encode_wav_pcm16(path, samples, cfg.sample_rate);

        ManifestRow row;
        row.path = path;
        row.smos = 5.0 - 4.0 * d;
        row.method = kMethods[i % 3];
        row.beta_tag = kBetaTags[i % 5];
        row.beta = csv::parse_double(row.beta_tag, "beta");
        row.signal_class = kClasses[i % 3];
        row.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        manifest.rows.push_back(std::move(row));
    }

    SynthResult result;
    result.manifest_path = cfg.out_dir + "/manifest.csv";
    result.count = cfg.count;
    manifest.save(result.manifest_path);
    return result;
}

} // namespace omoq
