#include "omoq/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "omoq/errors.hpp"

namespace omoq {

namespace {

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void append_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
}

void append_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

} // namespace

RawAudio decode_wav_bytes(const std::vector<uint8_t>& bytes, const std::string& name) {
    if (bytes.size() < 44) fail("wav: " + name + ": file too short for a RIFF header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        fail("wav: " + name + ": not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    uint32_t data_len = 0;
    bool have_fmt = false;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        uint32_t len = read_u32(bytes.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + len > bytes.size()) fail("wav: " + name + ": truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) fail("wav: " + name + ": fmt chunk too short");
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
            if (format == kFormatExtensible && len >= 40)
                format = read_u16(bytes.data() + body + 24); // subformat GUID leads with the tag
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1); // chunks are word-aligned
    }

    if (!have_fmt) fail("wav: " + name + ": missing fmt chunk");
    if (data == nullptr) fail("wav: " + name + ": missing data chunk");
    if (channels == 0) fail("wav: " + name + ": zero channels");
    if (data_len == 0) fail("wav: " + name + ": zero-length audio");

    RawAudio raw;
    raw.channels = channels;
    raw.sample_rate = rate;
    raw.source_path = name;

    if (format == kFormatPcm && bits == 16) {
        const size_t count = data_len / 2;
        raw.samples.resize(count);
        for (size_t i = 0; i < count; ++i) {
            int16_t s = static_cast<int16_t>(read_u16(data + 2 * i));
            raw.samples[i] = static_cast<float>(s) / 32768.0f;
        }
    } else if (format == kFormatFloat && bits == 32) {
        const size_t count = data_len / 4;
        raw.samples.resize(count);
        for (size_t i = 0; i < count; ++i) {
            uint32_t u = read_u32(data + 4 * i);
            float f;
            std::memcpy(&f, &u, 4);
            raw.samples[i] = f;
        }
    } else {
        fail("wav: " + name + ": unsupported codec (format tag " + std::to_string(format) +
             ", " + std::to_string(bits) + "-bit); PCM-16 and float-32 are supported");
    }

    if (raw.samples.empty()) fail("wav: " + name + ": zero-length audio");
    if (raw.samples.size() % channels != 0)
        raw.samples.resize(raw.samples.size() - raw.samples.size() % channels);
    return raw;
}

RawAudio decode_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("wav: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav_bytes(bytes, path);
}

std::vector<uint8_t> encode_wav_pcm16_bytes(const std::vector<float>& mono, uint32_t sample_rate) {
    std::vector<uint8_t> out;
    const uint32_t data_len = static_cast<uint32_t>(mono.size() * 2);
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    append_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    append_u32(out, 16);
    append_u16(out, kFormatPcm);
    append_u16(out, 1);
    append_u32(out, sample_rate);
    append_u32(out, sample_rate * 2);
    append_u16(out, 2);
    append_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    append_u32(out, data_len);
    for (float s : mono) {
        // Scale matches the decoder's 1/32768 so PCM-16 round-trips bit-exactly.
        long v = std::lrint(static_cast<double>(s) * 32768.0);
        if (v > 32767) v = 32767;
        if (v < -32768) v = -32768;
        append_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
    return out;
}

void encode_wav_pcm16(const std::string& path, const std::vector<float>& mono, uint32_t sample_rate) {
    auto bytes = encode_wav_pcm16_bytes(mono, sample_rate);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("wav: cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AudioClip downmix_and_normalize(const RawAudio& raw) {
    require(raw.channels >= 1, "wav: " + raw.source_path + ": no channels");
    const size_t frames = raw.frame_count();
    require(frames >= 1, "wav: " + raw.source_path + ": no samples");

    AudioClip clip;
    clip.sample_rate = raw.sample_rate;
    clip.source_path = raw.source_path;
    clip.samples.resize(frames);

    float peak = 0.0f;
    for (size_t i = 0; i < frames; ++i) {
        float sum = 0.0f;
        for (uint32_t c = 0; c < raw.channels; ++c) sum += raw.samples[i * raw.channels + c];
        clip.samples[i] = sum;
        peak = std::max(peak, std::fabs(sum));
    }
    if (peak == 0.0f) fail("wav: " + raw.source_path + ": all-zero signal, normalization undefined");
    // Division (not multiplication by the reciprocal) makes the peak sample
    // exactly +-1.0.
    for (float& s : clip.samples) s /= peak;
    return clip;
}

AudioClip trim_silence(const AudioClip& clip, const TrimConfig& cfg) {
    const size_t n = clip.samples.size();
    const size_t w = static_cast<size_t>(cfg.window);
    require(w >= 1, "trim: window must be >= 1");
    if (n < w) fail("trim: " + clip.source_path + ": entirely silent (shorter than one window)");

    auto window_level = [&](size_t i) {
        float sum = 0.0f, abs_sum = 0.0f;
        for (size_t j = 0; j < w; ++j) {
            sum += clip.samples[i + j];
            abs_sum += std::fabs(clip.samples[i + j]);
        }
        return cfg.rule == SilenceRule::window_sum_abs ? std::fabs(sum) : abs_sum;
    };

    const size_t last = n - w;
    size_t first_hit = n;
    for (size_t i = 0; i <= last; ++i) {
        if (window_level(i) > cfg.threshold) {
            first_hit = i;
            break;
        }
    }
    if (first_hit == n) fail("trim: " + clip.source_path + ": entirely silent");

    size_t last_hit = first_hit;
    for (size_t i = last + 1; i-- > first_hit;) {
        if (window_level(i) > cfg.threshold) {
            last_hit = i;
            break;
        }
    }

    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.source_path = clip.source_path;
    out.samples.assign(clip.samples.begin() + static_cast<ptrdiff_t>(first_hit),
                       clip.samples.begin() + static_cast<ptrdiff_t>(last_hit + w));
    return out;
}

AudioClip load_clip(const std::string& path, const TrimConfig& cfg) {
    return trim_silence(downmix_and_normalize(decode_wav(path)), cfg);
}

} // namespace omoq
