#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "maia/audio.hpp"
#include "maia/model.hpp"

namespace maia {

/// Grad-CAM heatmap at spectrogram resolution (frames x mel bands), min-max
/// normalized to [0,1].
struct Heatmap {
    std::vector<double> values;  // row-major frames x bands
    std::size_t frames = 0;
    std::size_t bands = 0;
    StftParams stft;
    std::size_t origin_length = 0;

    double at(std::size_t t, std::size_t b) const { return values[t * bands + b]; }

    /// Sample range a frame is attributed to.
    Segment frame_to_samples(std::size_t frame) const {
        const std::size_t start = frame * stft.hop_length;
        return {start, std::min(start + stft.window_length, origin_length)};
    }
};

struct ScoredSegment {
    Segment segment;
    double score = 0.0;   // importance per second
    int level = 0;        // refinement depth
    bool refinable = true;
};

struct ImportanceReport {
    std::vector<ScoredSegment> ranked;  // descending by score, ties by earlier start
    std::uint64_t queries_used = 0;
    double baseline_loss = 0.0;
};

namespace detail {

inline void sort_by_score(std::vector<ScoredSegment>& v) {
    std::stable_sort(v.begin(), v.end(), [](const ScoredSegment& a, const ScoredSegment& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.segment.start < b.segment.start;
    });
}

// Bilinear resample of a (st x sf) grid onto (dt x df), cell centers aligned.
inline std::vector<double> bilinear_resize(const std::vector<double>& src, std::size_t st,
                                           std::size_t sf, std::size_t dt, std::size_t df) {
    std::vector<double> out(dt * df, 0.0);
    for (std::size_t i = 0; i < dt; ++i) {
        const double u = (static_cast<double>(i) + 0.5) * static_cast<double>(st) / static_cast<double>(dt) - 0.5;
        const double uc = std::clamp(u, 0.0, static_cast<double>(st - 1));
        const std::size_t i0 = static_cast<std::size_t>(uc);
        const std::size_t i1 = std::min(i0 + 1, st - 1);
        const double wu = uc - static_cast<double>(i0);
        for (std::size_t j = 0; j < df; ++j) {
            const double v = (static_cast<double>(j) + 0.5) * static_cast<double>(sf) / static_cast<double>(df) - 0.5;
            const double vc = std::clamp(v, 0.0, static_cast<double>(sf - 1));
            const std::size_t j0 = static_cast<std::size_t>(vc);
            const std::size_t j1 = std::min(j0 + 1, sf - 1);
            const double wv = vc - static_cast<double>(j0);
            out[i * df + j] = (1.0 - wu) * ((1.0 - wv) * src[i0 * sf + j0] + wv * src[i0 * sf + j1]) +
                              wu * ((1.0 - wv) * src[i1 * sf + j0] + wv * src[i1 * sf + j1]);
        }
    }
    return out;
}

}  // namespace detail

/// Channel weights are the spatial means of the logit gradient; the weighted
/// channel sum is rectified, upsampled to the front-end spectrogram grid, and
/// min-max normalized.
inline Heatmap grad_cam(const WhiteBoxModel& m, const Waveform& x, int label,
                        const std::string& layer) {
    const LayerActivations la = m.layer_activations(x, label, layer);
    const std::size_t cells = la.time * la.freq;

    std::vector<double> raw(cells, 0.0);
    for (std::size_t c = 0; c < la.channels; ++c) {
        double alpha = 0.0;
        for (std::size_t i = 0; i < cells; ++i) alpha += la.gradient[c * cells + i];
        alpha /= static_cast<double>(cells);
        for (std::size_t i = 0; i < cells; ++i) raw[i] += alpha * la.feature_map[c * cells + i];
    }
    for (double& v : raw) v = std::max(v, 0.0);

    Heatmap h;
    h.stft = m.frontend_stft();
    h.bands = m.frontend_mel_bands();
    h.origin_length = x.size();
    h.frames = (x.size() - h.stft.window_length) / h.stft.hop_length + 1;
    h.values = detail::bilinear_resize(raw, la.time, la.freq, h.frames, h.bands);

    double mn = h.values[0], mx = h.values[0];
    for (double v : h.values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx <= 0.0) {
        std::fill(h.values.begin(), h.values.end(), 0.0);
    } else if (mx == mn) {
        std::fill(h.values.begin(), h.values.end(), 1.0);
    } else {
        for (double& v : h.values) v = (v - mn) / (mx - mn);
    }
    return h;
}

/// Thresholds the heatmap at the (100 - top_p) percentile, collapses selected
/// cells per frame by max over bands, maps frames to sample ranges, merges
/// overlaps, and dilates anything shorter than min_segment.
inline SegmentMask heatmap_to_mask(const Heatmap& h, double top_p, std::size_t track_length,
                                   double taper_shape = 0.1, std::size_t min_segment = 0) {
    if (top_p <= 0.0 || top_p > 100.0)
        throw std::invalid_argument("heatmap_to_mask: top_p must lie in (0,100]");

    double mx = 0.0;
    for (double v : h.values) mx = std::max(mx, v);
    if (mx <= 0.0)
        throw std::runtime_error("heatmap_to_mask: heatmap is identically zero, no candidate zone");

    std::vector<double> sorted(h.values);
    std::sort(sorted.begin(), sorted.end());
    const double q = (100.0 - top_p) / 100.0;
    const std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
    const double threshold = sorted[idx];

    std::vector<Segment> ranges;
    for (std::size_t t = 0; t < h.frames; ++t) {
        double fmax = 0.0;
        for (std::size_t b = 0; b < h.bands; ++b) fmax = std::max(fmax, h.at(t, b));
        if (fmax >= threshold) {
            Segment s = h.frame_to_samples(t);
            s.end = std::min(s.end, track_length);
            if (s.start >= s.end) continue;
            if (!ranges.empty() && s.start <= ranges.back().end)
                ranges.back().end = std::max(ranges.back().end, s.end);
            else
                ranges.push_back(s);
        }
    }
    if (ranges.empty())
        throw std::runtime_error("heatmap_to_mask: no frame above threshold");

    if (min_segment > 0) {
        for (Segment& s : ranges) {
            if (s.length() >= min_segment) continue;
            const std::size_t grow = min_segment - s.length();
            const std::size_t left = std::min(grow / 2, s.start);
            s.start -= left;
            s.end = std::min(s.end + (grow - left), track_length);
        }
        std::sort(ranges.begin(), ranges.end(),
                  [](const Segment& a, const Segment& b) { return a.start < b.start; });
        std::vector<Segment> merged;
        for (const Segment& s : ranges) {
            if (!merged.empty() && s.start <= merged.back().end)
                merged.back().end = std::max(merged.back().end, s.end);
            else
                merged.push_back(s);
        }
        ranges = std::move(merged);
    }
    return build_mask(ranges, track_length, taper_shape);
}

/// Contiguous non-overlapping chunks; a shorter trailing remainder is kept.
inline std::vector<Segment> coarse_partition(const Waveform& x, double chunk_seconds) {
    if (chunk_seconds <= 0.0)
        throw std::invalid_argument("coarse_partition: chunk_seconds must be > 0");
    const std::size_t chunk = static_cast<std::size_t>(std::llround(chunk_seconds * x.sample_rate));
    if (chunk == 0) throw std::invalid_argument("coarse_partition: chunk shorter than one sample");

    std::vector<Segment> out;
    for (std::size_t start = 0; start < x.size(); start += chunk)
        out.push_back({start, std::min(start + chunk, x.size())});
    return out;
}

/// Importance of one segment: loss increase caused by zero-masking it,
/// normalized by its duration in seconds. Consumes exactly one model query.
inline ScoredSegment segment_score(const Model& m, const Waveform& x, int label, const Segment& seg,
                                   double baseline_loss, double taper_shape = 0.1) {
    if (seg.end > x.size() || seg.start >= seg.end)
        throw std::invalid_argument("segment_score: segment out of bounds");
    const SegmentMask mask = build_mask({seg}, x.size(), taper_shape);
    const double loss = ce_loss(m, zero_mask(x, mask), label);
    const double seconds = static_cast<double>(seg.length()) / x.sample_rate;
    return {seg, (loss - baseline_loss) / seconds, 0, true};
}

/// One refinement round: the highest-scoring refinable segment is replaced by
/// `subdivisions` equal sub-segments, each freshly scored. Segments shorter
/// than twice the minimum taper are frozen instead of split; the round then
/// moves on to the next-best candidate.
inline std::vector<ScoredSegment> refine(std::vector<ScoredSegment> state, const Model& m,
                                         const Waveform& x, int label, int subdivisions,
                                         double baseline_loss, double taper_shape = 0.1,
                                         std::size_t min_taper_samples = 128) {
    if (state.empty()) throw std::invalid_argument("refine: empty state");
    if (subdivisions < 2) throw std::invalid_argument("refine: subdivisions must be >= 2");

    while (true) {
        std::size_t best = state.size();
        for (std::size_t i = 0; i < state.size(); ++i) {
            if (!state[i].refinable) continue;
            if (best == state.size() || state[i].score > state[best].score ||
                (state[i].score == state[best].score &&
                 state[i].segment.start < state[best].segment.start))
                best = i;
        }
        if (best == state.size()) return state;  // nothing left to refine

        const ScoredSegment parent = state[best];
        if (parent.segment.length() < 2 * min_taper_samples) {
            state[best].refinable = false;
            continue;
        }

        state.erase(state.begin() + static_cast<std::ptrdiff_t>(best));
        const std::size_t len = parent.segment.length();
        for (int j = 0; j < subdivisions; ++j) {
            const std::size_t a =
                parent.segment.start + (len * static_cast<std::size_t>(j)) / static_cast<std::size_t>(subdivisions);
            const std::size_t b =
                parent.segment.start + (len * static_cast<std::size_t>(j + 1)) / static_cast<std::size_t>(subdivisions);
            ScoredSegment child = segment_score(m, x, label, {a, b}, baseline_loss, taper_shape);
            child.level = parent.level + 1;
            state.push_back(child);
        }
        return state;
    }
}

struct BlackboxImportanceConfig {
    double chunk_seconds = 0.5;
    int subdivisions = 4;
    int rounds = 2;            // T
    int top_r = 3;
    std::uint64_t query_budget = 1000;
    double taper_shape = 0.1;
    std::size_t min_taper_samples = 128;
};

/// Coarse pass, T refinement rounds (stopping early if the budget binds), and
/// top-r selection. Uses only predict-level access, so it works against both
/// capability levels. Query accounting: 1 baseline + N chunks + one batch of
/// `subdivisions` per completed round.
inline ImportanceReport analyze_blackbox(const Model& m, const Waveform& x, int label,
                                         const BlackboxImportanceConfig& cfg) {
    const std::vector<Segment> chunks = coarse_partition(x, cfg.chunk_seconds);
    const std::uint64_t coarse_cost = 1 + chunks.size();
    if (cfg.query_budget < coarse_cost)
        throw std::runtime_error("analyze_blackbox: budget cannot complete the coarse pass");

    const std::uint64_t q0 = m.queries();
    const double baseline = ce_loss(m, x, label);

    std::vector<ScoredSegment> state;
    state.reserve(chunks.size());
    for (const Segment& c : chunks)
        state.push_back(segment_score(m, x, label, c, baseline, cfg.taper_shape));

    std::uint64_t used = coarse_cost;
    for (int round = 0; round < cfg.rounds; ++round) {
        if (used + static_cast<std::uint64_t>(cfg.subdivisions) > cfg.query_budget) break;
        const std::uint64_t before = m.queries();
        state = refine(std::move(state), m, x, label, cfg.subdivisions, baseline, cfg.taper_shape,
                       cfg.min_taper_samples);
        const std::uint64_t spent = m.queries() - before;
        used += spent;
        if (spent == 0) break;  // everything frozen
    }

    detail::sort_by_score(state);
    if (state.size() > static_cast<std::size_t>(cfg.top_r))
        state.resize(static_cast<std::size_t>(cfg.top_r));

    ImportanceReport report;
    report.ranked = std::move(state);
    report.baseline_loss = baseline;
    report.queries_used = m.queries() - q0;
    return report;
}

}  // namespace maia
