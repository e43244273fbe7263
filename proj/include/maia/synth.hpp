#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "maia/audio.hpp"
#include "maia/rng.hpp"

namespace maia {

enum class SynthClass { harmonic_tone = 0, filtered_noise = 1, chirp = 2 };

inline const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names{"harmonic_tone", "filtered_noise", "chirp"};
    return names;
}

struct SynthDatasetConfig {
    int clips_per_class = 100;
    double clip_seconds = 2.0;
    int sample_rate = 16000;
    std::uint64_t seed = 1;
};

/// One labeled clip. `interval` is the annotated sub-range holding the
/// class-discriminative signal; `f0` is the tone fundamental (0 otherwise).
struct LabeledClip {
    Waveform audio;
    int label = 0;
    Segment interval;
    double f0 = 0.0;
};

struct SynthDataset {
    std::vector<LabeledClip> clips;
    SynthDatasetConfig config;
};

namespace detail {

// Class signal occupies a Hann-shaped burst inside the annotated interval, so
// most of its energy sits near the interval center. Everything else is
// low-level background noise.
inline LabeledClip synth_clip(const SynthDatasetConfig& cfg, int label, int index) {
    const std::uint64_t clip_seed =
        splitmix64(splitmix64(cfg.seed) ^ (static_cast<std::uint64_t>(label) * 0x100000001b3ULL +
                                           static_cast<std::uint64_t>(index)));
    Rng rng(clip_seed);

    const int sr = cfg.sample_rate;
    const std::size_t len = static_cast<std::size_t>(std::llround(cfg.clip_seconds * sr));
    const double pi = 3.14159265358979323846;

    LabeledClip clip;
    clip.label = label;
    clip.audio.sample_rate = sr;
    clip.audio.samples.resize(len);

    const double bg_sigma = 0.01;
    for (std::size_t n = 0; n < len; ++n) clip.audio.samples[n] = bg_sigma * rng.normal();

    const double dur = rng.uniform(0.30, 0.45);
    const double margin = 0.05;
    const double start_s = rng.uniform(margin, cfg.clip_seconds - dur - margin);
    const std::size_t a = static_cast<std::size_t>(std::llround(start_s * sr));
    const std::size_t b = a + static_cast<std::size_t>(std::llround(dur * sr));
    clip.interval = {a, b};
    const std::size_t ilen = b - a;

    const double amp = 0.4;
    std::vector<double> sig(ilen, 0.0);
    if (label == static_cast<int>(SynthClass::harmonic_tone)) {
        static const std::array<double, 3> fundamentals{220.0, 330.0, 440.0};
        clip.f0 = fundamentals[static_cast<std::size_t>(rng.uniform_int(0, 2))];
        static const std::array<double, 4> hamps{1.0, 0.7, 0.5, 0.35};
        for (int h = 0; h < 4; ++h) {
            const double f = clip.f0 * (h + 1);
            const double phase = rng.uniform(0.0, 2.0 * pi);
            const double a_h = amp * hamps[static_cast<std::size_t>(h)] / 2.55;
            for (std::size_t n = 0; n < ilen; ++n)
                sig[n] += a_h * std::sin(2.0 * pi * f * n / sr + phase);
        }
    } else if (label == static_cast<int>(SynthClass::filtered_noise)) {
        const int partials = 60;
        const double a_p = amp / std::sqrt(static_cast<double>(partials) / 2.0);
        for (int p = 0; p < partials; ++p) {
            const double f = rng.uniform(2000.0, 4000.0);
            const double phase = rng.uniform(0.0, 2.0 * pi);
            for (std::size_t n = 0; n < ilen; ++n)
                sig[n] += a_p * std::sin(2.0 * pi * f * n / sr + phase);
        }
        // keep band noise at the tone's scale
        double rms = 0.0;
        for (double v : sig) rms += v * v;
        rms = std::sqrt(rms / static_cast<double>(ilen));
        const double target = amp / std::sqrt(2.0);
        if (rms > 0.0)
            for (double& v : sig) v *= target / rms;
    } else {
        const double f_lo = 500.0, f_hi = 3000.0;
        const double phase0 = rng.uniform(0.0, 2.0 * pi);
        const double t_int = static_cast<double>(ilen) / sr;
        for (std::size_t n = 0; n < ilen; ++n) {
            const double t = static_cast<double>(n) / sr;
            const double phi = 2.0 * pi * (f_lo * t + (f_hi - f_lo) / (2.0 * t_int) * t * t);
            sig[n] = amp * std::sin(phi + phase0);
        }
    }

    // Gaussian envelope concentrates the signature near the interval center so
    // masking the chunk that holds the center removes nearly all its energy.
    const double center = static_cast<double>(ilen - 1) / 2.0;
    const double sigma_env = static_cast<double>(ilen) / 6.0;
    for (std::size_t n = 0; n < ilen; ++n) {
        const double d = (static_cast<double>(n) - center) / sigma_env;
        clip.audio.samples[a + n] += std::exp(-0.5 * d * d) * sig[n];
    }

    // clamp and round through float so float32 WAV round trips are exact
    for (double& v : clip.audio.samples) {
        v = std::clamp(v, -1.0, 1.0);
        v = static_cast<double>(static_cast<float>(v));
    }
    return clip;
}

}  // namespace detail

/// Pure function of the config: the same seed yields a bit-identical dataset.
/// Clips are laid out class-major: clips[c * clips_per_class + i].
inline SynthDataset synth_dataset(const SynthDatasetConfig& cfg) {
    if (cfg.clips_per_class < 1)
        throw std::invalid_argument("synth_dataset: clips_per_class must be >= 1");
    SynthDataset ds;
    ds.config = cfg;
    ds.clips.reserve(3 * static_cast<std::size_t>(cfg.clips_per_class));
    for (int label = 0; label < 3; ++label)
        for (int i = 0; i < cfg.clips_per_class; ++i)
            ds.clips.push_back(detail::synth_clip(cfg, label, i));
    return ds;
}

}  // namespace maia
