#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "maia/fft.hpp"

namespace maia {

/// Mono PCM sample sequence. Samples live in [-1, 1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 16000;

    std::size_t size() const { return samples.size(); }
    double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class WindowKind { hann, rect };

struct StftParams {
    std::size_t window_length = 1024;  // power of two
    std::size_t hop_length = 512;
    WindowKind window = WindowKind::hann;

    bool operator==(const StftParams&) const = default;
};

/// Complex STFT frames, row-major frames x (window_length/2 + 1).
struct Spectrogram {
    std::vector<std::complex<double>> bins;
    std::size_t frame_count = 0;
    std::size_t bin_count = 0;
    StftParams params;
    std::size_t origin_length = 0;

    std::complex<double>& at(std::size_t frame, std::size_t bin) {
        return bins[frame * bin_count + bin];
    }
    const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
        return bins[frame * bin_count + bin];
    }
};

/// Log-magnitude mel spectrogram, row-major frames x n_mels.
struct MelSpectrogram {
    std::vector<double> cells;
    std::size_t frame_count = 0;
    std::size_t n_mels = 0;
    double floor_value = 1e-10;

    double& at(std::size_t frame, std::size_t band) { return cells[frame * n_mels + band]; }
    double at(std::size_t frame, std::size_t band) const { return cells[frame * n_mels + band]; }
};

/// Half-open sample interval [start, end).
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

/// Per-sample attenuation envelope in [0,1] built from Tukey-tapered segments.
/// envelope == 0 everywhere outside the segments; overlaps combine by max.
struct SegmentMask {
    std::vector<double> envelope;
    std::vector<Segment> segments;
    double taper_shape = 0.1;

    std::size_t size() const { return envelope.size(); }
    bool empty_coverage() const {
        for (double e : envelope)
            if (e > 0.0) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// windows and masks
// ---------------------------------------------------------------------------

/// Tukey window: cosine ramps of shape*length/2 samples each side, plateau 1
/// between. shape 0 is rectangular, shape 1 is a symmetric Hann.
inline std::vector<double> tukey_envelope(std::size_t length, double shape) {
    if (length < 1) throw std::invalid_argument("tukey_envelope: length must be >= 1");
    if (shape < 0.0 || shape > 1.0)
        throw std::invalid_argument("tukey_envelope: shape must lie in [0,1]");

    std::vector<double> w(length, 1.0);
    if (length == 1 || shape == 0.0) return w;

    const double pi = 3.14159265358979323846;
    const double ramp = shape * static_cast<double>(length - 1) / 2.0;
    for (std::size_t n = 0; n < length; ++n) {
        const double d = static_cast<double>(n);
        if (d < ramp) {
            w[n] = 0.5 * (1.0 + std::cos(pi * (d / ramp - 1.0)));
        } else if (d > static_cast<double>(length - 1) - ramp) {
            const double m = static_cast<double>(length - 1) - d;
            w[n] = 0.5 * (1.0 + std::cos(pi * (m / ramp - 1.0)));
        }
    }
    return w;
}

/// Builds the attack mask for a set of segments. Overlaps combine pointwise
/// by max, which keeps the envelope in [0,1] and idempotent.
inline SegmentMask build_mask(const std::vector<Segment>& segments, std::size_t track_length,
                              double taper_shape = 0.1) {
    SegmentMask mask;
    mask.taper_shape = taper_shape;
    mask.segments = segments;
    mask.envelope.assign(track_length, 0.0);
    for (const Segment& seg : segments) {
        if (seg.start >= seg.end || seg.end > track_length)
            throw std::invalid_argument("build_mask: segment out of bounds");
        std::vector<double> w = tukey_envelope(seg.length(), taper_shape);
        for (std::size_t n = 0; n < seg.length(); ++n) {
            double& e = mask.envelope[seg.start + n];
            e = std::max(e, w[n]);
        }
    }
    return mask;
}

/// Silences the masked region: out[n] = x[n] * (1 - envelope[n]).
/// Samples with envelope 0 are bit-exact copies of the input.
inline Waveform zero_mask(const Waveform& w, const SegmentMask& mask) {
    if (w.size() != mask.size()) throw std::invalid_argument("zero_mask: length mismatch");
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples.resize(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) {
        const double e = mask.envelope[n];
        if (e == 0.0)
            out.samples[n] = w.samples[n];
        else if (e == 1.0)
            out.samples[n] = 0.0;
        else
            out.samples[n] = w.samples[n] * (1.0 - e);
    }
    return out;
}

/// out = x (.) (1 - m) + fill (.) m. Envelope-0 samples copy x bit-exactly,
/// envelope-1 samples copy fill bit-exactly.
inline Waveform composite(const Waveform& x, const Waveform& fill, const SegmentMask& mask) {
    if (x.size() != fill.size() || x.size() != mask.size())
        throw std::invalid_argument("composite: length mismatch");
    Waveform out;
    out.sample_rate = x.sample_rate;
    out.samples.resize(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double e = mask.envelope[n];
        if (e == 0.0)
            out.samples[n] = x.samples[n];
        else if (e == 1.0)
            out.samples[n] = fill.samples[n];
        else
            out.samples[n] = x.samples[n] * (1.0 - e) + fill.samples[n] * e;
    }
    return out;
}

// ---------------------------------------------------------------------------
// transforms
// ---------------------------------------------------------------------------

namespace detail {

// Periodic variants for COLA at hop = window/2.
inline std::vector<double> analysis_window(const StftParams& p) {
    std::vector<double> w(p.window_length, 1.0);
    if (p.window == WindowKind::hann) {
        const double pi = 3.14159265358979323846;
        for (std::size_t n = 0; n < p.window_length; ++n)
            w[n] = 0.5 * (1.0 - std::cos(2.0 * pi * n / static_cast<double>(p.window_length)));
    }
    return w;
}

}  // namespace detail

/// No padding; a trailing partial window is discarded.
inline Spectrogram stft(const Waveform& w, const StftParams& p) {
    if (p.hop_length == 0 || p.hop_length > p.window_length)
        throw std::invalid_argument("stft: require 0 < hop <= window");
    if (!detail::is_power_of_two(p.window_length))
        throw std::invalid_argument("stft: window length must be a power of two");
    if (w.size() < p.window_length)
        throw std::invalid_argument("stft: track shorter than one window");

    const std::size_t frames = (w.size() - p.window_length) / p.hop_length + 1;
    const std::size_t bins = p.window_length / 2 + 1;
    const std::vector<double> win = detail::analysis_window(p);

    Spectrogram s;
    s.frame_count = frames;
    s.bin_count = bins;
    s.params = p;
    s.origin_length = w.size();
    s.bins.resize(frames * bins);

    std::vector<std::complex<double>> buf(p.window_length);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t off = t * p.hop_length;
        for (std::size_t n = 0; n < p.window_length; ++n)
            buf[n] = {w.samples[off + n] * win[n], 0.0};
        detail::fft_inplace(buf, false);
        for (std::size_t k = 0; k < bins; ++k) s.at(t, k) = buf[k];
    }
    return s;
}

/// Weighted overlap-add inverse. Exact to roundoff on the fully-overlapped
/// interior for COLA-satisfying params; samples no frame covers stay 0.
inline Waveform istft(const Spectrogram& s, const StftParams& p) {
    if (p.window_length / 2 + 1 != s.bin_count || p != s.params)
        throw std::invalid_argument("istft: params inconsistent with stored frames");
    const std::vector<double> win = detail::analysis_window(p);

    std::vector<double> num(s.origin_length, 0.0);
    std::vector<double> den(s.origin_length, 0.0);
    std::vector<std::complex<double>> buf(p.window_length);

    for (std::size_t t = 0; t < s.frame_count; ++t) {
        for (std::size_t k = 0; k < s.bin_count; ++k) buf[k] = s.at(t, k);
        for (std::size_t k = s.bin_count; k < p.window_length; ++k)
            buf[k] = std::conj(s.at(t, p.window_length - k));
        detail::fft_inplace(buf, true);
        const std::size_t off = t * p.hop_length;
        for (std::size_t n = 0; n < p.window_length && off + n < s.origin_length; ++n) {
            num[off + n] += buf[n].real() * win[n];
            den[off + n] += win[n] * win[n];
        }
    }

    Waveform out;
    out.samples.resize(s.origin_length, 0.0);
    for (std::size_t n = 0; n < s.origin_length; ++n)
        if (den[n] > 1e-12) out.samples[n] = num[n] / den[n];
    return out;
}

// ---------------------------------------------------------------------------
// mel scale
// ---------------------------------------------------------------------------

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filterbank, row-major n_mels x bins, mel-spaced between 0 and
/// the Nyquist frequency.
inline std::vector<double> mel_filterbank(std::size_t n_mels, std::size_t bins, int sample_rate,
                                          std::size_t window_length) {
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < n_mels + 2; ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));

    std::vector<double> fb(n_mels * bins, 0.0);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(window_length);
            if (f > lo && f < mid)
                fb[m * bins + k] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                fb[m * bins + k] = (hi - f) / (hi - mid);
        }
    }
    return fb;
}

/// Band center frequencies matching mel_filterbank's geometry.
inline std::vector<double> mel_band_centers_hz(std::size_t n_mels, int sample_rate) {
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(n_mels);
    for (std::size_t m = 0; m < n_mels; ++m)
        centers[m] = mel_to_hz(mel_max * static_cast<double>(m + 1) / static_cast<double>(n_mels + 1));
    return centers;
}

/// Sparse view of the triangular filterbank: per band the contiguous bin range
/// with nonzero weight. Same values as mel_filterbank, cheaper to apply.
struct SparseMelFilterbank {
    std::size_t n_mels = 0;
    std::size_t bins = 0;
    std::vector<std::size_t> k_lo, k_hi;         // [band], half-open
    std::vector<std::vector<double>> weights;    // [band][k - k_lo]
};

inline SparseMelFilterbank make_sparse_filterbank(std::size_t n_mels, std::size_t bins,
                                                  int sample_rate, std::size_t window_length) {
    const std::vector<double> dense = mel_filterbank(n_mels, bins, sample_rate, window_length);
    SparseMelFilterbank fb;
    fb.n_mels = n_mels;
    fb.bins = bins;
    fb.k_lo.resize(n_mels);
    fb.k_hi.resize(n_mels);
    fb.weights.resize(n_mels);
    for (std::size_t m = 0; m < n_mels; ++m) {
        std::size_t lo = bins, hi = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            if (dense[m * bins + k] != 0.0) {
                lo = std::min(lo, k);
                hi = std::max(hi, k + 1);
            }
        }
        if (lo >= hi) {
            lo = hi = 0;
        }
        fb.k_lo[m] = lo;
        fb.k_hi[m] = hi;
        fb.weights[m].assign(dense.begin() + static_cast<std::ptrdiff_t>(m * bins + lo),
                             dense.begin() + static_cast<std::ptrdiff_t>(m * bins + hi));
    }
    return fb;
}

/// cell = log(max(mel-filtered magnitude, floor_value)).
inline MelSpectrogram mel_spectrogram(const Waveform& w, const StftParams& p, std::size_t n_mels,
                                      double floor_value = 1e-10) {
    if (n_mels < 1) throw std::invalid_argument("mel_spectrogram: n_mels must be >= 1");
    if (floor_value <= 0.0) throw std::invalid_argument("mel_spectrogram: floor_value must be > 0");

    const Spectrogram s = stft(w, p);
    const SparseMelFilterbank fb =
        make_sparse_filterbank(n_mels, s.bin_count, w.sample_rate, p.window_length);

    MelSpectrogram mel;
    mel.frame_count = s.frame_count;
    mel.n_mels = n_mels;
    mel.floor_value = floor_value;
    mel.cells.resize(s.frame_count * n_mels);
    std::vector<double> mags(s.bin_count);
    for (std::size_t t = 0; t < s.frame_count; ++t) {
        for (std::size_t k = 0; k < s.bin_count; ++k) mags[k] = std::abs(s.at(t, k));
        for (std::size_t m = 0; m < n_mels; ++m) {
            double acc = 0.0;
            const std::vector<double>& wrow = fb.weights[m];
            for (std::size_t k = fb.k_lo[m]; k < fb.k_hi[m]; ++k)
                acc += wrow[k - fb.k_lo[m]] * mags[k];
            mel.at(t, m) = std::log(std::max(acc, floor_value));
        }
    }
    return mel;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Log-spectral distance in dB: per frame the RMS over bins of the difference
/// of 20*log10(|.|+eps) magnitudes, then the mean over frames.
inline double lsd(const Waveform& a, const Waveform& b, const StftParams& p) {
    if (a.size() != b.size() || a.sample_rate != b.sample_rate)
        throw std::invalid_argument("lsd: waveforms must share length and sample rate");
    const double eps = 1e-10;
    const Spectrogram sa = stft(a, p);
    const Spectrogram sb = stft(b, p);

    double frame_sum = 0.0;
    for (std::size_t t = 0; t < sa.frame_count; ++t) {
        double bin_sum = 0.0;
        for (std::size_t k = 0; k < sa.bin_count; ++k) {
            const double da = 20.0 * std::log10(std::abs(sa.at(t, k)) + eps);
            const double db = 20.0 * std::log10(std::abs(sb.at(t, k)) + eps);
            bin_sum += (da - db) * (da - db);
        }
        frame_sum += std::sqrt(bin_sum / static_cast<double>(sa.bin_count));
    }
    return frame_sum / static_cast<double>(sa.frame_count);
}

}  // namespace maia
