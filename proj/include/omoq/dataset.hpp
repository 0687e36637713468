#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "omoq/features.hpp"
#include "omoq/rng.hpp"
#include "omoq/wav.hpp"

namespace omoq {

// Row of the dataset manifest CSV: path,smos,method,beta,class,split.
struct ManifestRow {
    std::string path;
    double smos = 3.0;
    std::string method;
    std::string beta_tag; // exact decimal tag from the manifest
    double beta = 1.0;
    std::string signal_class;
    std::string split; // train | val | test
};

struct Manifest {
    std::vector<ManifestRow> rows;

    static Manifest load(const std::string& csv_path);
    void save(const std::string& csv_path) const;

    std::vector<size_t> split_indices(const std::string& split) const;

    // When no val rows exist, moves the last 10% (seeded shuffle, stratified
    // by method tag) of train rows into the validation split.
    void derive_val_split(uint32_t seed, double fraction = 0.1);
};

// [1,5] -> [0,1] target scaling and its inverse.
double scale_target(double smos);
double rescale_omos(double y);

enum class SegmentPolicy { truncate_random, full, repeat_to_max };

const char* segment_policy_name(SegmentPolicy p);
SegmentPolicy segment_policy_from_name(const std::string& s);

// One training window of l_min frames with a uniformly random start.
FeatureMatrix random_segment(const FeatureMatrix& feat, size_t l_min, Rng& rng);

// Deterministic evaluation windows: start_i = floor(i * (L - l_min) / (count - 1)).
std::vector<FeatureMatrix> eval_segments(const FeatureMatrix& feat, size_t l_min, size_t count);

// Tiles frames until target_frames are reached.
FeatureMatrix repeat_to_length(const FeatureMatrix& feat, size_t target_frames);

// Computes (or loads) per-clip features; memoizes in memory and, when a cache
// directory is set, on disk keyed by (path, kind) with source hash + mtime
// validation.
class FeatureProvider {
public:
    FeatureProvider(FeatureKind kind, FeatureConfig cfg, TrimConfig trim = {},
                    std::string cache_dir = {});

    const FeatureMatrix& get(const std::string& wav_path);
    FeatureKind kind() const { return kind_; }
    const FeatureConfig& config() const { return cfg_; }
    const TrimConfig& trim() const { return trim_; }

    // True when the last get() for this path was served from the disk cache.
    bool last_was_cache_hit() const { return last_hit_; }

    std::string cache_file_for(const std::string& wav_path) const;

private:
    FeatureKind kind_;
    FeatureConfig cfg_;
    TrimConfig trim_;
    std::string cache_dir_;
    std::unordered_map<std::string, FeatureMatrix> memo_;
    bool last_hit_ = false;
};

} // namespace omoq
