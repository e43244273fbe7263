#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maia/audio.hpp"

namespace maia {

enum class WavErrorKind { missing_file, malformed_header, unsupported_encoding, io_failure };

class WavError : public std::runtime_error {
public:
    WavError(WavErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    WavErrorKind kind() const { return kind_; }

private:
    WavErrorKind kind_;
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0]) | static_cast<std::uint16_t>(p[1] << 8);
}
inline void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 24) & 0xff);
}
inline void put_u16(std::vector<unsigned char>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}

}  // namespace detail

/// Reads a RIFF/WAVE file holding PCM16 or IEEE float32 samples. Multi-channel
/// input is averaged to mono and a warning is recorded.
inline Waveform load_wav(const std::string& path, std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WavError(WavErrorKind::missing_file, "load_wav: cannot open " + path);

    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw WavError(WavErrorKind::malformed_header, "load_wav: not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t off = 12;
    while (off + 8 <= raw.size()) {
        const std::uint32_t chunk_size = detail::read_u32(raw.data() + off + 4);
        const unsigned char* body = raw.data() + off + 8;
        if (off + 8 + chunk_size > raw.size())
            throw WavError(WavErrorKind::malformed_header, "load_wav: truncated chunk in " + path);
        if (std::memcmp(raw.data() + off, "fmt ", 4) == 0) {
            if (chunk_size < 16)
                throw WavError(WavErrorKind::malformed_header, "load_wav: short fmt chunk");
            format = detail::read_u16(body);
            channels = detail::read_u16(body + 2);
            rate = detail::read_u32(body + 4);
            bits = detail::read_u16(body + 14);
            have_fmt = true;
        } else if (std::memcmp(raw.data() + off, "data", 4) == 0) {
            data = body;
            data_size = chunk_size;
        }
        off += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data == nullptr)
        throw WavError(WavErrorKind::malformed_header, "load_wav: missing fmt or data chunk");
    if (channels == 0 || rate == 0)
        throw WavError(WavErrorKind::malformed_header, "load_wav: invalid fmt fields");

    const bool pcm16 = (format == 1 && bits == 16);
    const bool f32 = (format == 3 && bits == 32);
    if (!pcm16 && !f32)
        throw WavError(WavErrorKind::unsupported_encoding,
                       "load_wav: only PCM16 and float32 are supported");

    const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_size / frame_bytes;

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                acc += static_cast<double>(v);
            }
        }
        w.samples[i] = acc / channels;
    }
    if (channels > 1 && warnings)
        warnings->push_back("load_wav: averaged " + std::to_string(channels) + " channels to mono");
    return w;
}

/// Writes a mono WAV file. Out-of-range samples are clipped to [-1,1] with a
/// warning. float32 stores the float cast of each sample; pcm16 rounds to
/// 1/32768 steps, so its round trip error is at most 1/32768 per sample.
inline void save_wav(const Waveform& w, const std::string& path, WavEncoding enc,
                     std::vector<std::string>* warnings = nullptr) {
    const std::size_t n = w.samples.size();
    const std::size_t bytes_per_sample = (enc == WavEncoding::pcm16) ? 2 : 4;
    const std::uint32_t data_size = static_cast<std::uint32_t>(n * bytes_per_sample);
    const std::uint32_t rate = static_cast<std::uint32_t>(w.sample_rate);

    std::vector<unsigned char> out;
    out.reserve(44 + data_size);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    detail::put_u32(out, 36 + data_size);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    detail::put_u32(out, 16);
    detail::put_u16(out, enc == WavEncoding::pcm16 ? 1 : 3);
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, rate);
    detail::put_u32(out, rate * static_cast<std::uint32_t>(bytes_per_sample));
    detail::put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
    detail::put_u16(out, enc == WavEncoding::pcm16 ? 16 : 32);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    detail::put_u32(out, data_size);

    bool clipped = false;
    for (double s : w.samples) {
        double v = s;
        if (v > 1.0) {
            v = 1.0;
            clipped = true;
        } else if (v < -1.0) {
            v = -1.0;
            clipped = true;
        }
        if (enc == WavEncoding::pcm16) {
            double q = std::round(v * 32768.0);
            q = std::min(q, 32767.0);
            const std::int16_t iv = static_cast<std::int16_t>(q);
            detail::put_u16(out, static_cast<std::uint16_t>(iv));
        } else {
            const float fv = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &fv, 4);
            detail::put_u32(out, bits);
        }
    }
    if (clipped && warnings) warnings->push_back("save_wav: clipped out-of-range samples to [-1,1]");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WavError(WavErrorKind::io_failure, "save_wav: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw WavError(WavErrorKind::io_failure, "save_wav: write failed for " + path);
}

}  // namespace maia
