#include "omoq/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>

#include "omoq/csv.hpp"
#include "omoq/errors.hpp"

namespace omoq {

Manifest Manifest::load(const std::string& csv_path) {
    const auto table = csv::read_file(csv_path);
    const size_t c_path = table.column("path");
    const size_t c_smos = table.column("smos");
    const size_t c_method = table.column("method");
    const size_t c_beta = table.column("beta");
    const size_t c_class = table.column("class");
    const size_t c_split = table.column("split");

    Manifest m;
    m.rows.reserve(table.rows.size());
    std::map<std::string, bool> seen;
    for (const auto& r : table.rows) {
        ManifestRow row;
        row.path = r[c_path];
        row.smos = csv::parse_double(r[c_smos], "smos");
        row.method = r[c_method];
        row.beta_tag = r[c_beta];
        row.beta = csv::parse_double(r[c_beta], "beta");
        row.signal_class = r[c_class];
        row.split = r[c_split];
        require(row.smos >= 1.0 && row.smos <= 5.0,
                "manifest: SMOS outside [1,5] for " + row.path);
        require(row.beta > 0.0, "manifest: beta must be positive for " + row.path);
        require(row.split == "train" || row.split == "val" || row.split == "test",
                "manifest: split must be train|val|test for " + row.path);
        require(!seen[row.path], "manifest: duplicate path " + row.path);
        seen[row.path] = true;
        m.rows.push_back(std::move(row));
    }
    require(!m.rows.empty(), "manifest: no rows in " + csv_path);
    return m;
}

void Manifest::save(const std::string& csv_path) const {
    csv::Writer w(csv_path);
    w.row({"path", "smos", "method", "beta", "class", "split"});
    for (const auto& r : rows)
        w.row({r.path, csv::format_double(r.smos), r.method, r.beta_tag, r.signal_class, r.split});
}

std::vector<size_t> Manifest::split_indices(const std::string& split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i].split == split) out.push_back(i);
    return out;
}

void Manifest::derive_val_split(uint32_t seed, double fraction) {
    if (!split_indices("val").empty() || fraction <= 0.0) return;
    // Stratified by method: shuffle each method group, move its tail to val.
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i].split == "train") groups[rows[i].method].push_back(i);
    Rng rng = Rng::stream(seed, 0, 0x5eed);
    for (auto& [method, idx] : groups) {
        rng.shuffle(idx.begin(), idx.end());
        const size_t take = static_cast<size_t>(std::floor(fraction * static_cast<double>(idx.size())));
        for (size_t i = idx.size() - take; i < idx.size(); ++i) rows[idx[i]].split = "val";
    }
}

double scale_target(double smos) {
    require(smos >= 1.0 && smos <= 5.0, "scale_target: SMOS outside [1,5]");
    return (smos - 1.0) / 4.0;
}

double rescale_omos(double y) { return 4.0 * y + 1.0; }

const char* segment_policy_name(SegmentPolicy p) {
    switch (p) {
        case SegmentPolicy::truncate_random: return "truncate_random";
        case SegmentPolicy::full: return "full";
        case SegmentPolicy::repeat_to_max: return "repeat_to_max";
    }
    return "?";
}

SegmentPolicy segment_policy_from_name(const std::string& s) {
    if (s == "truncate_random") return SegmentPolicy::truncate_random;
    if (s == "full") return SegmentPolicy::full;
    if (s == "repeat_to_max") return SegmentPolicy::repeat_to_max;
    fail("segments: unknown policy '" + s + "' (truncate_random|full|repeat_to_max)");
}

namespace {
FeatureMatrix window(const FeatureMatrix& feat, size_t start, size_t frames) {
    FeatureMatrix out;
    out.kind = feat.kind;
    out.frames = frames;
    out.dim = feat.dim;
    out.data.assign(feat.data.begin() + static_cast<ptrdiff_t>(start * feat.dim),
                    feat.data.begin() + static_cast<ptrdiff_t>((start + frames) * feat.dim));
    return out;
}
} // namespace

FeatureMatrix random_segment(const FeatureMatrix& feat, size_t l_min, Rng& rng) {
    require(feat.frames >= l_min, "segments: clip shorter than segment length (" +
                                      std::to_string(feat.frames) + " < " + std::to_string(l_min) + ")");
    const size_t span = feat.frames - l_min;
    const size_t start = span == 0 ? 0 : rng.uniform_index(span + 1);
    return window(feat, start, l_min);
}

std::vector<FeatureMatrix> eval_segments(const FeatureMatrix& feat, size_t l_min, size_t count) {
    require(count >= 1, "segments: count must be >= 1");
    require(feat.frames >= l_min, "segments: clip shorter than segment length (" +
                                      std::to_string(feat.frames) + " < " + std::to_string(l_min) + ")");
    const size_t span = feat.frames - l_min;
    std::vector<FeatureMatrix> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const size_t start = count == 1 ? 0 : (i * span) / (count - 1);
        out.push_back(window(feat, start, l_min));
    }
    return out;
}

FeatureMatrix repeat_to_length(const FeatureMatrix& feat, size_t target_frames) {
    require(feat.frames >= 1, "segments: empty clip");
    require(target_frames >= feat.frames, "segments: repeat target shorter than clip");
    FeatureMatrix out;
    out.kind = feat.kind;
    out.frames = target_frames;
    out.dim = feat.dim;
    out.data.resize(target_frames * feat.dim);
    for (size_t t = 0; t < target_frames; ++t)
        std::memcpy(out.data.data() + t * feat.dim,
                    feat.data.data() + (t % feat.frames) * feat.dim, feat.dim * sizeof(float));
    return out;
}

FeatureProvider::FeatureProvider(FeatureKind kind, FeatureConfig cfg, TrimConfig trim,
                                 std::string cache_dir)
    : kind_(kind), cfg_(cfg), trim_(trim), cache_dir_(std::move(cache_dir)) {}

std::string FeatureProvider::cache_file_for(const std::string& wav_path) const {
    // FNV-1a over path + kind keeps names short and collision-safe enough
    // for a per-dataset cache directory.
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const char* s) {
        for (; *s; ++s) {
            h ^= static_cast<uint8_t>(*s);
            h *= 1099511628211ull;
        }
    };
    mix(wav_path.c_str());
    mix("|");
    mix(feature_kind_name(kind_));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return cache_dir_ + "/" + buf + ".feat";
}

const FeatureMatrix& FeatureProvider::get(const std::string& wav_path) {
    last_hit_ = false;
    auto it = memo_.find(wav_path);
    if (it != memo_.end()) return it->second;

    if (!cache_dir_.empty()) {
        const std::string cache_path = cache_file_for(wav_path);
        if (std::filesystem::exists(cache_path)) {
            uint64_t stored_hash = 0;
            int64_t stored_mtime = 0;
            FeatureMatrix m = read_feature_file(cache_path, &stored_hash, &stored_mtime);
            if (m.kind == kind_ && stored_mtime == file_mtime(wav_path) &&
                stored_hash == fnv1a_file(wav_path)) {
                last_hit_ = true;
                return memo_.emplace(wav_path, std::move(m)).first->second;
            }
        }
        AudioClip clip = load_clip(wav_path, trim_);
        FeatureMatrix m = compute_features(clip, kind_, cfg_);
        write_feature_file(cache_path, m, fnv1a_file(wav_path), file_mtime(wav_path));
        return memo_.emplace(wav_path, std::move(m)).first->second;
    }

    AudioClip clip = load_clip(wav_path, trim_);
    return memo_.emplace(wav_path, compute_features(clip, kind_, cfg_)).first->second;
}

} // namespace omoq
