#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace omoq {

// Mono clip after downmix + peak normalization, amplitudes in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    uint32_t sample_rate = 44100;
    std::string source_path;
};

// Interleaved multichannel buffer as decoded from disk.
struct RawAudio {
    std::vector<float> samples; // frame-major: samples[frame*channels + ch]
    uint32_t channels = 0;
    uint32_t sample_rate = 0;
    std::string source_path;

    size_t frame_count() const { return channels ? samples.size() / channels : 0; }
};

// RIFF/WAVE reader for PCM 16-bit and IEEE float-32, little-endian.
// 16-bit samples map to [-1, 1) by division with 32768.
RawAudio decode_wav(const std::string& path);
RawAudio decode_wav_bytes(const std::vector<uint8_t>& bytes, const std::string& name);

// PCM-16 writer (used by the synthetic generator and tests).
void encode_wav_pcm16(const std::string& path, const std::vector<float>& mono, uint32_t sample_rate);
std::vector<uint8_t> encode_wav_pcm16_bytes(const std::vector<float>& mono, uint32_t sample_rate);

// Channel summation followed by peak normalization to [-1, 1].
// Rejects all-zero input (the scale factor would be undefined).
AudioClip downmix_and_normalize(const RawAudio& raw);

enum class SilenceRule {
    window_sum_abs, // |sum of 4 consecutive samples| > threshold (default)
    window_abs_sum, // sum of |samples| over the window > threshold
};

struct TrimConfig {
    float threshold = 0.0061f;
    int window = 4;
    SilenceRule rule = SilenceRule::window_sum_abs;
};

// Drops leading/trailing regions where no 4-sample window exceeds the
// threshold. The result starts at the first qualifying window and ends at the
// last qualifying window's final sample. Throws if the whole clip is silent.
AudioClip trim_silence(const AudioClip& clip, const TrimConfig& cfg = {});

// decode + downmix + normalize + trim in one call.
AudioClip load_clip(const std::string& path, const TrimConfig& cfg = {});

} // namespace omoq
