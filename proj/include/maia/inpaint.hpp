#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "maia/audio.hpp"
#include "maia/rng.hpp"

namespace maia {

/// Latent code conditioning the generator. The reference inpainter splits it
/// half/half into per-band gain and shaped-noise mix controls.
struct Latent {
    std::vector<double> z;

    static Latent zeros(std::size_t dim) { return Latent{std::vector<double>(dim, 0.0)}; }
};

/// A prepared (track, mask) pair: repeated renders with different latents skip
/// the context analysis. Plans are immutable once built.
class InpaintPlan {
public:
    virtual ~InpaintPlan() = default;
    virtual Waveform inpaint(const Latent& z) const = 0;
    virtual Waveform reinpaint(const Latent& z, const Waveform& current) const = 0;
};

/// Generator plug-in contract. Implementations must be pure functions of
/// (context, mask, latent, current): identical inputs give bit-identical
/// output, and sample_latent is deterministic per seed.
class Inpainter {
public:
    virtual ~Inpainter() = default;

    virtual std::size_t latent_dim() const = 0;
    virtual double blend_beta() const = 0;
    virtual Latent sample_latent(std::uint64_t seed) const = 0;
    virtual Waveform inpaint(const Waveform& x, const SegmentMask& mask, const Latent& z) const = 0;
    virtual Waveform reinpaint(const Waveform& current, const Waveform& x, const SegmentMask& mask,
                               const Latent& z) const = 0;
    virtual std::unique_ptr<InpaintPlan> prepare(const Waveform& x, const SegmentMask& mask) const = 0;
};

/// Deterministic latent-conditioned reference generator. Gap content is
/// synthesized from the surrounding context only: per-bin log-magnitude
/// interpolation between the clean frames flanking each gap, phase continued
/// at the flanks' instantaneous frequency. The latent modulates per-mel-band
/// gain (first half, tanh * 6 dB) and a shaped-noise mix (second half,
/// sigmoid * 0.3). Unmasked samples always equal x bit-exactly.
class ReferenceInpainter final : public Inpainter {
public:
    explicit ReferenceInpainter(StftParams stft = {}, std::size_t latent_dim = 16,
                                double blend_beta = 0.5)
        : stft_(stft), latent_dim_(latent_dim), blend_beta_(blend_beta) {
        if (latent_dim_ < 2 || latent_dim_ % 2 != 0)
            throw std::invalid_argument("ReferenceInpainter: latent_dim must be even and >= 2");
        if (blend_beta_ < 0.0 || blend_beta_ > 1.0)
            throw std::invalid_argument("ReferenceInpainter: blend_beta must lie in [0,1]");
    }

    std::size_t latent_dim() const override { return latent_dim_; }
    double blend_beta() const override { return blend_beta_; }

    Latent sample_latent(std::uint64_t seed) const override {
        Rng rng(seed);
        Latent z;
        z.z.resize(latent_dim_);
        for (double& v : z.z) v = rng.normal();
        return z;
    }

    Waveform inpaint(const Waveform& x, const SegmentMask& mask, const Latent& z) const override {
        Plan plan(*this, x, mask);
        return plan.inpaint(z);
    }

    Waveform reinpaint(const Waveform& current, const Waveform& x, const SegmentMask& mask,
                       const Latent& z) const override {
        Plan plan(*this, x, mask);
        return plan.reinpaint(z, current);
    }

    std::unique_ptr<InpaintPlan> prepare(const Waveform& x, const SegmentMask& mask) const override {
        return std::make_unique<Plan>(*this, x, mask);
    }

private:
    class Plan final : public InpaintPlan {
    public:
        Plan(const ReferenceInpainter& gen, const Waveform& x, const SegmentMask& mask)
            : stft_g_(gen.stft_), latent_dim_g_(gen.latent_dim_), blend_beta_g_(gen.blend_beta_),
              x_(x), mask_(mask) {
            if (x.size() != mask.size())
                throw std::invalid_argument("inpaint: mask length must match track length");
            spec_ = stft(x, stft_g_);
            win_ = detail::analysis_window(stft_g_);
            bins_ = spec_.bin_count;

            // a frame is clean iff no sample under it carries mask weight
            const std::size_t W = stft_g_.window_length;
            const std::size_t hop = stft_g_.hop_length;
            std::vector<char> dirty(spec_.frame_count, 0);
            bool any_dirty = false;
            for (std::size_t t = 0; t < spec_.frame_count; ++t) {
                const std::size_t off = t * hop;
                for (std::size_t n = off; n < std::min(off + W, x.size()); ++n) {
                    if (mask.envelope[n] > 0.0) {
                        dirty[t] = 1;
                        any_dirty = true;
                        break;
                    }
                }
            }

            if (any_dirty) {
                bool any_clean = false;
                for (char d : dirty) any_clean |= (d == 0);
                if (!any_clean)
                    throw std::runtime_error("inpaint: mask leaves no clean context frame");
            }

            for (std::size_t t = 0; t < spec_.frame_count; ++t) {
                if (!dirty[t]) continue;
                std::size_t b = t;
                while (b + 1 < spec_.frame_count && dirty[b + 1]) ++b;
                runs_.push_back(make_run(t, b, dirty));
                t = b;
            }

            // OLA denominator over all frames, numerator over clean frames only
            den_.assign(x.size(), 0.0);
            num_clean_.assign(x.size(), 0.0);
            std::vector<std::complex<double>> buf(W);
            for (std::size_t t = 0; t < spec_.frame_count; ++t) {
                const std::size_t off = t * hop;
                for (std::size_t n = 0; n < W && off + n < x.size(); ++n)
                    den_[off + n] += win_[n] * win_[n];
                if (dirty[t]) continue;
                frame_to_time(t, buf);
                for (std::size_t n = 0; n < W && off + n < x.size(); ++n)
                    num_clean_[off + n] += buf[n].real() * win_[n];
            }

            band_of_bin_ = make_band_map();
        }

        Waveform inpaint(const Latent& z) const override {
            return composite(x_, fill_waveform(z), mask_);
        }

        Waveform reinpaint(const Latent& z, const Waveform& current) const override {
            if (current.size() != x_.size())
                throw std::invalid_argument("reinpaint: current length must match track length");
            Waveform fill = fill_waveform(z);
            const double beta = blend_beta_g_;
            for (std::size_t n = 0; n < fill.size(); ++n)
                fill.samples[n] = beta * fill.samples[n] + (1.0 - beta) * current.samples[n];
            return composite(x_, fill, mask_);
        }

        /// Raw synthesized fill before compositing.
        Waveform fill_waveform(const Latent& z) const {
            if (z.z.size() != latent_dim_g_)
                throw std::invalid_argument("inpaint: latent dimension mismatch");
            const std::size_t half = latent_dim_g_ / 2;
            std::vector<double> gain(half), mix(half);
            for (std::size_t b = 0; b < half; ++b) {
                gain[b] = std::pow(10.0, 6.0 * std::tanh(z.z[b]) / 20.0);
                mix[b] = 0.3 / (1.0 + std::exp(-z.z[half + b]));
            }

            const std::size_t W = stft_g_.window_length;
            const std::size_t hop = stft_g_.hop_length;
            const double two_pi = 2.0 * 3.14159265358979323846;

            std::vector<double> num(num_clean_);
            std::vector<std::complex<double>> frame(W);
            for (const GapRun& run : runs_) {
                for (std::size_t t = run.first; t <= run.last; ++t) {
                    std::fill(frame.begin(), frame.end(), std::complex<double>(0.0, 0.0));
                    const double u = run.two_sided()
                                         ? static_cast<double>(t - run.left_flank) /
                                               static_cast<double>(run.right_flank - run.left_flank)
                                         : 0.0;
                    for (std::size_t k = 0; k < bins_; ++k) {
                        double logmag;
                        if (run.two_sided())
                            logmag = (1.0 - u) * run.logmag_l[k] + u * run.logmag_r[k];
                        else if (run.has_left)
                            logmag = run.logmag_l[k];
                        else
                            logmag = run.logmag_r[k];
                        double mag = std::exp(logmag) * gain[band_of_bin_[k]];

                        std::complex<double> c(0.0, 0.0);
                        if (run.has_left) {
                            const double phi =
                                run.phase_l[k] + static_cast<double>(t - run.left_flank) * run.dphi_l[k];
                            c += (run.two_sided() ? (1.0 - u) : 1.0) *
                                 std::complex<double>(std::cos(phi), std::sin(phi));
                        }
                        if (run.has_right) {
                            const double phi =
                                run.phase_r[k] - static_cast<double>(run.right_flank - t) * run.dphi_r[k];
                            c += (run.two_sided() ? u : 1.0) *
                                 std::complex<double>(std::cos(phi), std::sin(phi));
                        }
                        c *= mag;

                        const double nu = mix[band_of_bin_[k]];
                        if (nu > 0.0) {
                            const double theta =
                                two_pi * hash_to_unit(noise_salt_ ^ (t * bins_ + k) * 0x9e3779b97f4a7c15ULL);
                            c = (1.0 - nu) * c +
                                nu * mag * std::complex<double>(std::cos(theta), std::sin(theta));
                        }
                        frame[k] = c;
                    }
                    for (std::size_t k = bins_; k < W; ++k) frame[k] = std::conj(frame[W - k]);
                    detail::fft_inplace(frame, true);
                    const std::size_t off = t * hop;
                    for (std::size_t n = 0; n < W && off + n < x_.size(); ++n)
                        num[off + n] += frame[n].real() * win_[n];
                }
            }

            Waveform fill;
            fill.sample_rate = x_.sample_rate;
            fill.samples.assign(x_.size(), 0.0);
            for (std::size_t n = 0; n < x_.size(); ++n)
                if (den_[n] > 1e-12) fill.samples[n] = num[n] / den_[n];
            return fill;
        }

    private:
        struct GapRun {
            std::size_t first = 0, last = 0;  // inclusive dirty frame range
            bool has_left = false, has_right = false;
            std::size_t left_flank = 0, right_flank = 0;
            std::vector<double> logmag_l, logmag_r;
            std::vector<double> phase_l, phase_r;
            std::vector<double> dphi_l, dphi_r;

            bool two_sided() const { return has_left && has_right; }
        };

        GapRun make_run(std::size_t first, std::size_t last, const std::vector<char>& dirty) const {
            GapRun run;
            run.first = first;
            run.last = last;
            run.has_left = first > 0;
            run.has_right = last + 1 < spec_.frame_count;
            if (!run.has_left && !run.has_right)
                throw std::runtime_error("inpaint: gap has no flanking context");

            const double two_pi = 2.0 * 3.14159265358979323846;
            const double hop_ratio =
                static_cast<double>(spec_.params.hop_length) / static_cast<double>(spec_.params.window_length);
            auto nominal_advance = [&](std::size_t k) { return two_pi * hop_ratio * static_cast<double>(k); };
            auto wrap = [&](double a) {
                while (a > 3.14159265358979323846) a -= two_pi;
                while (a < -3.14159265358979323846) a += two_pi;
                return a;
            };

            if (run.has_left) {
                run.left_flank = first - 1;
                run.logmag_l.resize(bins_);
                run.phase_l.resize(bins_);
                run.dphi_l.resize(bins_);
                const bool have_prev = run.left_flank >= 1 && !dirty[run.left_flank - 1];
                for (std::size_t k = 0; k < bins_; ++k) {
                    const std::complex<double> s = spec_.at(run.left_flank, k);
                    run.logmag_l[k] = std::log(std::abs(s) + 1e-12);
                    run.phase_l[k] = std::arg(s);
                    double adv = nominal_advance(k);
                    if (have_prev) {
                        const double measured =
                            std::arg(s) - std::arg(spec_.at(run.left_flank - 1, k));
                        adv += wrap(measured - adv);
                    }
                    run.dphi_l[k] = adv;
                }
            }
            if (run.has_right) {
                run.right_flank = last + 1;
                run.logmag_r.resize(bins_);
                run.phase_r.resize(bins_);
                run.dphi_r.resize(bins_);
                const bool have_next =
                    run.right_flank + 1 < spec_.frame_count && !dirty[run.right_flank + 1];
                for (std::size_t k = 0; k < bins_; ++k) {
                    const std::complex<double> s = spec_.at(run.right_flank, k);
                    run.logmag_r[k] = std::log(std::abs(s) + 1e-12);
                    run.phase_r[k] = std::arg(s);
                    double adv = nominal_advance(k);
                    if (have_next) {
                        const double measured =
                            std::arg(spec_.at(run.right_flank + 1, k)) - std::arg(s);
                        adv += wrap(measured - adv);
                    }
                    run.dphi_r[k] = adv;
                }
            }
            return run;
        }

        // mel-spaced grouping of bins into latent_dim/2 bands
        std::vector<std::size_t> make_band_map() const {
            const std::size_t half = latent_dim_g_ / 2;
            const double mel_max = hz_to_mel(x_.sample_rate / 2.0);
            std::vector<std::size_t> map(bins_, 0);
            for (std::size_t k = 0; k < bins_; ++k) {
                const double f =
                    static_cast<double>(k) * x_.sample_rate / static_cast<double>(stft_g_.window_length);
                const double frac = hz_to_mel(f) / mel_max;
                map[k] = std::min(half - 1, static_cast<std::size_t>(frac * static_cast<double>(half)));
            }
            return map;
        }

        void frame_to_time(std::size_t t, std::vector<std::complex<double>>& buf) const {
            const std::size_t W = stft_g_.window_length;
            for (std::size_t k = 0; k < bins_; ++k) buf[k] = spec_.at(t, k);
            for (std::size_t k = bins_; k < W; ++k) buf[k] = std::conj(spec_.at(t, W - k));
            detail::fft_inplace(buf, true);
        }

        static constexpr std::uint64_t noise_salt_ = 0x6d616961696e70ULL;

        StftParams stft_g_;
        std::size_t latent_dim_g_;
        double blend_beta_g_;
        Waveform x_;
        SegmentMask mask_;
        Spectrogram spec_;
        std::vector<double> win_;
        std::size_t bins_ = 0;
        std::vector<GapRun> runs_;
        std::vector<double> den_, num_clean_;
        std::vector<std::size_t> band_of_bin_;
    };

    StftParams stft_;
    std::size_t latent_dim_;
    double blend_beta_;
};

}  // namespace maia
