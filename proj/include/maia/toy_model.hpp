#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "maia/audio.hpp"
#include "maia/model.hpp"
#include "maia/rng.hpp"

namespace maia {

/// Fixed small convolutional architecture over the log-mel front end:
/// two valid 3x3 conv blocks with a sharp-softplus nonlinearity and 2x2
/// average pooling, global average pooling, and a dense classification head.
/// The sharp softplus behaves like ReLU but keeps the network smooth, so
/// analytic gradients can be checked against central finite differences.
struct ToyModelConfig {
    int sample_rate = 16000;
    StftParams stft{1024, 512, WindowKind::hann};
    std::size_t n_mels = 32;
    // Floor chosen so digital silence lands at z = -2, just below the live
    // signal range, instead of an out-of-distribution extreme.
    double mel_floor = 0.05;
    double norm_mean = 1.0;   // log-mel standardization, fixed constants
    double norm_scale = 2.0;
    std::size_t conv1_channels = 8;
    std::size_t conv2_channels = 16;
    int class_count = 3;
    double softplus_sharpness = 16.0;

    bool operator==(const ToyModelConfig&) const = default;
};

struct ToyModelParams {
    std::vector<double> conv1_w;  // [c1][3][3]
    std::vector<double> conv1_b;  // [c1]
    std::vector<double> conv2_w;  // [c2][c1][3][3]
    std::vector<double> conv2_b;  // [c2]
    std::vector<double> dense_w;  // [classes][c2]
    std::vector<double> dense_b;  // [classes]
};

namespace detail {

inline double softplus(double t, double beta) {
    const double s = beta * t;
    if (s > 30.0) return t;
    if (s < -30.0) return std::exp(s) / beta;
    return std::log1p(std::exp(s)) / beta;
}

inline double softplus_grad(double t, double beta) {
    const double s = beta * t;
    if (s > 30.0) return 1.0;
    if (s < -30.0) return std::exp(s);
    return 1.0 / (1.0 + std::exp(-s));
}

}  // namespace detail

class ToyModel final : public WhiteBoxModel {
public:
    ToyModel() : ToyModel(ToyModelConfig{}, 1) {}

    ToyModel(const ToyModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
        Rng rng(splitmix64(init_seed ^ 0x746f796d6f64656cULL));
        auto init = [&rng](std::vector<double>& v, std::size_t n, double scale) {
            v.resize(n);
            for (auto& x : v) x = scale * rng.normal();
        };
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
        const std::size_t k = static_cast<std::size_t>(cfg_.class_count);
        init(params_.conv1_w, c1 * 9, std::sqrt(2.0 / 9.0));
        params_.conv1_b.assign(c1, 0.0);
        init(params_.conv2_w, c2 * c1 * 9, std::sqrt(2.0 / (9.0 * static_cast<double>(c1))));
        params_.conv2_b.assign(c2, 0.0);
        init(params_.dense_w, k * c2, std::sqrt(1.0 / static_cast<double>(c2)));
        params_.dense_b.assign(k, 0.0);
    }

    ToyModel(const ToyModelConfig& cfg, ToyModelParams params)
        : cfg_(cfg), params_(std::move(params)) {}

    int class_count() const override { return cfg_.class_count; }
    int sample_rate() const override { return cfg_.sample_rate; }
    std::vector<std::string> layer_names() const override { return {"conv1", "conv2"}; }
    StftParams frontend_stft() const override { return cfg_.stft; }
    std::size_t frontend_mel_bands() const override { return cfg_.n_mels; }

    const ToyModelConfig& config() const { return cfg_; }
    const ToyModelParams& params() const { return params_; }
    ToyModelParams& mutable_params() { return params_; }

    /// Minimum input length: enough STFT frames to survive both conv blocks.
    std::size_t min_samples() const {
        return cfg_.stft.window_length + (min_frames() - 1) * cfg_.stft.hop_length;
    }

    // ---- introspection used by gradient tests -----------------------------

    /// Recomputes the class logits with the named layer's post-activation map
    /// replaced, continuing the forward pass from that point.
    std::vector<double> logits_from_layer(const Waveform& x, const std::string& layer,
                                          const std::vector<double>& feature_map) const {
        Workspace ws;
        forward(x, ws);
        if (layer == "conv1") {
            if (feature_map.size() != ws.act1.size())
                throw std::invalid_argument("logits_from_layer: shape mismatch");
            ws.act1 = feature_map;
            forward_from_act1(ws);
        } else if (layer == "conv2") {
            if (feature_map.size() != ws.act2.size())
                throw std::invalid_argument("logits_from_layer: shape mismatch");
            ws.act2 = feature_map;
            forward_from_act2(ws);
        } else {
            throw std::invalid_argument("logits_from_layer: unknown layer " + layer);
        }
        return ws.logits;
    }

    // ---- training support --------------------------------------------------

    struct FeatureImage {
        std::vector<double> z;  // normalized log-mel, frames x n_mels
        std::size_t frames = 0;
    };

    FeatureImage features(const Waveform& x) const {
        check_input(x);
        FeatureImage img;
        const MelSpectrogram mel = mel_spectrogram(x, cfg_.stft, cfg_.n_mels, cfg_.mel_floor);
        img.frames = mel.frame_count;
        img.z.resize(mel.cells.size());
        for (std::size_t i = 0; i < mel.cells.size(); ++i)
            img.z[i] = (mel.cells[i] - cfg_.norm_mean) / cfg_.norm_scale;
        return img;
    }

    /// Forward + backward on a precomputed feature image; accumulates
    /// parameter gradients and returns the cross-entropy loss.
    double train_step(const FeatureImage& img, int label, ToyModelParams& grads) const {
        Workspace ws;
        forward_image(img.z, img.frames, ws);
        const double loss = -std::log(std::max(ws.probs[label], 1e-300));
        std::vector<double> dlogits(ws.probs);
        dlogits[label] -= 1.0;
        backward_to_params(ws, dlogits, grads);
        return loss;
    }

    ProbVector predict_image(const FeatureImage& img) const {
        Workspace ws;
        forward_image(img.z, img.frames, ws);
        return ws.probs;
    }

protected:
    ProbVector do_predict(const Waveform& x) const override {
        Workspace ws;
        forward(x, ws);
        return ws.probs;
    }

    std::vector<double> do_input_gradient(const Waveform& x, int label) const override {
        if (label < 0 || label >= cfg_.class_count)
            throw std::invalid_argument("input_gradient: invalid label");
        Workspace ws;
        forward(x, ws);
        std::vector<double> dlogits(ws.probs);  // d ce / d logits = p - onehot
        dlogits[label] -= 1.0;
        std::vector<double> dz;
        backward_to_image(ws, dlogits, dz);
        return backward_image_to_samples(x, ws, dz);
    }

    LayerActivations do_layer_activations(const Waveform& x, int label,
                                          const std::string& layer) const override {
        if (label < 0 || label >= cfg_.class_count)
            throw std::invalid_argument("layer_activations: invalid label");
        Workspace ws;
        forward(x, ws);

        // gradient of the pre-softmax logit for `label`
        std::vector<double> dlogits(static_cast<std::size_t>(cfg_.class_count), 0.0);
        dlogits[static_cast<std::size_t>(label)] = 1.0;

        LayerActivations la;
        if (layer == "conv2") {
            la.channels = cfg_.conv2_channels;
            la.time = ws.t2;
            la.freq = ws.f2;
            la.feature_map = ws.act2;
            la.gradient = dact2_from_dlogits(ws, dlogits);
        } else if (layer == "conv1") {
            la.channels = cfg_.conv1_channels;
            la.time = ws.t1;
            la.freq = ws.f1;
            la.feature_map = ws.act1;
            std::vector<double> dact2 = dact2_from_dlogits(ws, dlogits);
            la.gradient = backprop_act2_to_act1(ws, dact2);
        } else {
            throw std::invalid_argument("layer_activations: unknown layer " + layer);
        }
        return la;
    }

private:
    struct Workspace {
        Spectrogram spec;
        std::vector<double> mel_lin;  // pre-floor mel magnitudes, frames x n_mels
        std::vector<double> z;        // normalized log-mel image
        std::size_t frames = 0;
        bool have_spec = false;

        std::size_t t1 = 0, f1 = 0;    // conv1 output dims
        std::size_t tp = 0, fp = 0;    // pooled dims
        std::size_t t2 = 0, f2 = 0;    // conv2 output dims
        std::vector<double> pre1, act1, pool1, pre2, act2;
        std::vector<double> gap;
        std::vector<double> logits, probs;
    };

    std::size_t min_frames() const { return 8; }

    void check_input(const Waveform& x) const {
        if (x.sample_rate != cfg_.sample_rate)
            throw std::invalid_argument("ToyModel: sample rate mismatch");
        if (x.size() < min_samples())
            throw std::invalid_argument("ToyModel: clip shorter than receptive minimum");
    }

    void forward(const Waveform& x, Workspace& ws) const {
        check_input(x);
        ws.spec = stft(x, cfg_.stft);
        ws.have_spec = true;
        ws.frames = ws.spec.frame_count;
        const std::size_t bins = ws.spec.bin_count;
        const SparseMelFilterbank& fb = filterbank(bins);

        ws.mel_lin.assign(ws.frames * cfg_.n_mels, 0.0);
        ws.z.resize(ws.frames * cfg_.n_mels);
        std::vector<double> mags(bins);
        for (std::size_t t = 0; t < ws.frames; ++t) {
            for (std::size_t k = 0; k < bins; ++k) mags[k] = std::abs(ws.spec.at(t, k));
            for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
                double acc = 0.0;
                const double* wrow = fb.weights[m].data();
                for (std::size_t k = fb.k_lo[m]; k < fb.k_hi[m]; ++k)
                    acc += wrow[k - fb.k_lo[m]] * mags[k];
                ws.mel_lin[t * cfg_.n_mels + m] = acc;
                const double logv = std::log(std::max(acc, cfg_.mel_floor));
                ws.z[t * cfg_.n_mels + m] = (logv - cfg_.norm_mean) / cfg_.norm_scale;
            }
        }
        forward_image(ws.z, ws.frames, ws);
    }

    void forward_image(const std::vector<double>& z, std::size_t frames, Workspace& ws) const {
        const std::size_t M = cfg_.n_mels;
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
        if (frames < min_frames()) throw std::invalid_argument("ToyModel: too few frames");
        ws.z = z;
        ws.frames = frames;
        ws.t1 = frames - 2;
        ws.f1 = M - 2;
        ws.tp = ws.t1 / 2;
        ws.fp = ws.f1 / 2;
        ws.t2 = ws.tp - 2;
        ws.f2 = ws.fp - 2;

        const double beta = cfg_.softplus_sharpness;

        ws.pre1.assign(c1 * ws.t1 * ws.f1, 0.0);
        ws.act1.resize(ws.pre1.size());
        for (std::size_t c = 0; c < c1; ++c) {
            const double* w = params_.conv1_w.data() + c * 9;
            const double b = params_.conv1_b[c];
            for (std::size_t t = 0; t < ws.t1; ++t) {
                double* row = ws.pre1.data() + (c * ws.t1 + t) * ws.f1;
                for (std::size_t f = 0; f < ws.f1; ++f) row[f] = b;
                for (std::size_t dt = 0; dt < 3; ++dt)
                    for (std::size_t df = 0; df < 3; ++df) {
                        const double wv = w[dt * 3 + df];
                        const double* src = z.data() + (t + dt) * M + df;
                        for (std::size_t f = 0; f < ws.f1; ++f) row[f] += wv * src[f];
                    }
                double* arow = ws.act1.data() + (c * ws.t1 + t) * ws.f1;
                for (std::size_t f = 0; f < ws.f1; ++f) arow[f] = detail::softplus(row[f], beta);
            }
        }

        ws.pool1.assign(c1 * ws.tp * ws.fp, 0.0);
        for (std::size_t c = 0; c < c1; ++c)
            for (std::size_t t = 0; t < ws.tp; ++t) {
                const double* r0 = ws.act1.data() + (c * ws.t1 + 2 * t) * ws.f1;
                const double* r1 = r0 + ws.f1;
                double* dst = ws.pool1.data() + (c * ws.tp + t) * ws.fp;
                for (std::size_t f = 0; f < ws.fp; ++f)
                    dst[f] = 0.25 * (r0[2 * f] + r0[2 * f + 1] + r1[2 * f] + r1[2 * f + 1]);
            }

        ws.pre2.assign(c2 * ws.t2 * ws.f2, 0.0);
        ws.act2.resize(ws.pre2.size());
        for (std::size_t co = 0; co < c2; ++co) {
            const double b = params_.conv2_b[co];
            for (std::size_t t = 0; t < ws.t2; ++t) {
                double* row = ws.pre2.data() + (co * ws.t2 + t) * ws.f2;
                for (std::size_t f = 0; f < ws.f2; ++f) row[f] = b;
                for (std::size_t ci = 0; ci < c1; ++ci) {
                    const double* w = params_.conv2_w.data() + (co * c1 + ci) * 9;
                    for (std::size_t dt = 0; dt < 3; ++dt)
                        for (std::size_t df = 0; df < 3; ++df) {
                            const double wv = w[dt * 3 + df];
                            const double* src = ws.pool1.data() + (ci * ws.tp + t + dt) * ws.fp + df;
                            for (std::size_t f = 0; f < ws.f2; ++f) row[f] += wv * src[f];
                        }
                }
                double* arow = ws.act2.data() + (co * ws.t2 + t) * ws.f2;
                for (std::size_t f = 0; f < ws.f2; ++f) arow[f] = detail::softplus(row[f], beta);
            }
        }

        forward_from_act2(ws);
    }

    void forward_from_act2(Workspace& ws) const {
        const std::size_t c2 = cfg_.conv2_channels;
        const std::size_t z2 = ws.t2 * ws.f2;
        ws.gap.assign(c2, 0.0);
        for (std::size_t c = 0; c < c2; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < z2; ++i) acc += ws.act2[c * z2 + i];
            ws.gap[c] = acc / static_cast<double>(z2);
        }

        const std::size_t k = static_cast<std::size_t>(cfg_.class_count);
        ws.logits.assign(k, 0.0);
        for (std::size_t y = 0; y < k; ++y) {
            double acc = params_.dense_b[y];
            for (std::size_t c = 0; c < c2; ++c) acc += params_.dense_w[y * c2 + c] * ws.gap[c];
            ws.logits[y] = acc;
        }

        double mx = ws.logits[0];
        for (double v : ws.logits) mx = std::max(mx, v);
        double sum = 0.0;
        ws.probs.assign(k, 0.0);
        for (std::size_t y = 0; y < k; ++y) {
            ws.probs[y] = std::exp(ws.logits[y] - mx);
            sum += ws.probs[y];
        }
        for (double& p : ws.probs) p /= sum;
    }

    void forward_from_act1(Workspace& ws) const {
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
        const double beta = cfg_.softplus_sharpness;
        for (std::size_t c = 0; c < c1; ++c)
            for (std::size_t t = 0; t < ws.tp; ++t)
                for (std::size_t f = 0; f < ws.fp; ++f) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < 2; ++i)
                        for (std::size_t j = 0; j < 2; ++j)
                            acc += ws.act1[(c * ws.t1 + 2 * t + i) * ws.f1 + 2 * f + j];
                    ws.pool1[(c * ws.tp + t) * ws.fp + f] = acc * 0.25;
                }
        for (std::size_t co = 0; co < c2; ++co) {
            const double b = params_.conv2_b[co];
            for (std::size_t t = 0; t < ws.t2; ++t)
                for (std::size_t f = 0; f < ws.f2; ++f) {
                    double acc = b;
                    for (std::size_t ci = 0; ci < c1; ++ci) {
                        const double* w = params_.conv2_w.data() + (co * c1 + ci) * 9;
                        for (std::size_t dt = 0; dt < 3; ++dt)
                            for (std::size_t df = 0; df < 3; ++df)
                                acc += w[dt * 3 + df] * ws.pool1[(ci * ws.tp + t + dt) * ws.fp + f + df];
                    }
                    const std::size_t i = (co * ws.t2 + t) * ws.f2 + f;
                    ws.pre2[i] = acc;
                    ws.act2[i] = detail::softplus(acc, beta);
                }
        }
        forward_from_act2(ws);
    }

    std::vector<double> dact2_from_dlogits(const Workspace& ws, const std::vector<double>& dlogits) const {
        const std::size_t c2 = cfg_.conv2_channels;
        const std::size_t k = static_cast<std::size_t>(cfg_.class_count);
        const std::size_t z2 = ws.t2 * ws.f2;
        std::vector<double> dgap(c2, 0.0);
        for (std::size_t y = 0; y < k; ++y)
            for (std::size_t c = 0; c < c2; ++c) dgap[c] += dlogits[y] * params_.dense_w[y * c2 + c];
        std::vector<double> dact2(c2 * z2);
        for (std::size_t c = 0; c < c2; ++c) {
            const double g = dgap[c] / static_cast<double>(z2);
            for (std::size_t i = 0; i < z2; ++i) dact2[c * z2 + i] = g;
        }
        return dact2;
    }

    std::vector<double> backprop_act2_to_act1(const Workspace& ws, const std::vector<double>& dact2) const {
        std::vector<double> dpre2(dact2.size());
        for (std::size_t i = 0; i < dact2.size(); ++i)
            dpre2[i] = dact2[i] * detail::softplus_grad(ws.pre2[i], cfg_.softplus_sharpness);
        return backprop_act2_to_act1_from_dpre2(ws, dpre2);
    }

    std::vector<double> backprop_act2_to_act1_from_dpre2(const Workspace& ws,
                                                         const std::vector<double>& dpre2) const {
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;

        std::vector<double> dpool1(c1 * ws.tp * ws.fp, 0.0);
        for (std::size_t co = 0; co < c2; ++co)
            for (std::size_t t = 0; t < ws.t2; ++t) {
                const double* grow = dpre2.data() + (co * ws.t2 + t) * ws.f2;
                for (std::size_t ci = 0; ci < c1; ++ci) {
                    const double* w = params_.conv2_w.data() + (co * c1 + ci) * 9;
                    for (std::size_t dt = 0; dt < 3; ++dt)
                        for (std::size_t df = 0; df < 3; ++df) {
                            const double wv = w[dt * 3 + df];
                            double* dst = dpool1.data() + (ci * ws.tp + t + dt) * ws.fp + df;
                            for (std::size_t f = 0; f < ws.f2; ++f) dst[f] += wv * grow[f];
                        }
                }
            }

        std::vector<double> dact1(c1 * ws.t1 * ws.f1, 0.0);
        for (std::size_t c = 0; c < c1; ++c)
            for (std::size_t t = 0; t < ws.tp; ++t) {
                const double* src = dpool1.data() + (c * ws.tp + t) * ws.fp;
                double* d0 = dact1.data() + (c * ws.t1 + 2 * t) * ws.f1;
                double* d1 = d0 + ws.f1;
                for (std::size_t f = 0; f < ws.fp; ++f) {
                    const double g = src[f] * 0.25;
                    d0[2 * f] += g;
                    d0[2 * f + 1] += g;
                    d1[2 * f] += g;
                    d1[2 * f + 1] += g;
                }
            }
        return dact1;
    }

    void backward_to_image(const Workspace& ws, const std::vector<double>& dlogits,
                           std::vector<double>& dz) const {
        const std::size_t c1 = cfg_.conv1_channels;
        const std::size_t M = cfg_.n_mels;
        const double beta = cfg_.softplus_sharpness;

        std::vector<double> dact2 = dact2_from_dlogits(ws, dlogits);
        std::vector<double> dact1 = backprop_act2_to_act1(ws, dact2);

        std::vector<double> dpre1(dact1.size());
        for (std::size_t i = 0; i < dact1.size(); ++i)
            dpre1[i] = dact1[i] * detail::softplus_grad(ws.pre1[i], beta);

        dz.assign(ws.frames * M, 0.0);
        for (std::size_t c = 0; c < c1; ++c) {
            const double* w = params_.conv1_w.data() + c * 9;
            for (std::size_t t = 0; t < ws.t1; ++t)
                for (std::size_t f = 0; f < ws.f1; ++f) {
                    const double g = dpre1[(c * ws.t1 + t) * ws.f1 + f];
                    for (std::size_t dt = 0; dt < 3; ++dt)
                        for (std::size_t df = 0; df < 3; ++df)
                            dz[(t + dt) * M + (f + df)] += g * w[dt * 3 + df];
                }
        }
    }

    /// Chains d(loss)/d(normalized log-mel) through mel filtering, STFT
    /// magnitudes, and the windowed frames down to the raw samples.
    std::vector<double> backward_image_to_samples(const Waveform& x, const Workspace& ws,
                                                  const std::vector<double>& dz) const {
        const std::size_t bins = ws.spec.bin_count;
        const std::size_t W = cfg_.stft.window_length;
        const std::size_t hop = cfg_.stft.hop_length;
        const SparseMelFilterbank& fb = filterbank(bins);
        const std::vector<double> win = detail::analysis_window(cfg_.stft);

        std::vector<double> dx(x.size(), 0.0);
        std::vector<std::complex<double>> buf(W);
        std::vector<double> dmag(bins);
        for (std::size_t t = 0; t < ws.frames; ++t) {
            // d loss / d |S| for this frame (zero where the floor clamps)
            std::fill(dmag.begin(), dmag.end(), 0.0);
            for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
                const double lin = ws.mel_lin[t * cfg_.n_mels + m];
                if (lin <= cfg_.mel_floor) continue;
                const double dmel = dz[t * cfg_.n_mels + m] / (cfg_.norm_scale * lin);
                const double* wrow = fb.weights[m].data();
                for (std::size_t k = fb.k_lo[m]; k < fb.k_hi[m]; ++k)
                    dmag[k] += wrow[k - fb.k_lo[m]] * dmel;
            }
            std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
            bool any = false;
            for (std::size_t k = 0; k < bins; ++k) {
                if (dmag[k] == 0.0) continue;
                const std::complex<double> s = ws.spec.at(t, k);
                const double mag = std::abs(s);
                if (mag <= 0.0) continue;
                // d|S|/dRe = Re/|S|, d|S|/dIm = Im/|S|; pack as conj for the
                // inverse-transform trick below
                buf[k] = std::complex<double>(dmag[k] * s.real() / mag, -dmag[k] * s.imag() / mag);
                any = true;
            }
            if (!any) continue;
            // g[n] = sum_k (A_k cos(2pi k n/W) - B_k sin(2pi k n/W))
            //      = Re(FFT(conj(C))[n]) with C_k = A_k + i B_k
            detail::fft_inplace(buf, false);
            const std::size_t off = t * hop;
            for (std::size_t n = 0; n < W; ++n) dx[off + n] += buf[n].real() * win[n];
        }
        return dx;
    }

    void backward_to_params(const Workspace& ws, const std::vector<double>& dlogits,
                            ToyModelParams& g) const {
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
        const std::size_t k = static_cast<std::size_t>(cfg_.class_count);
        const std::size_t M = cfg_.n_mels;
        const double beta = cfg_.softplus_sharpness;

        ensure_shape(g);
        for (std::size_t y = 0; y < k; ++y) {
            g.dense_b[y] += dlogits[y];
            for (std::size_t c = 0; c < c2; ++c) g.dense_w[y * c2 + c] += dlogits[y] * ws.gap[c];
        }

        std::vector<double> dact2 = dact2_from_dlogits(ws, dlogits);
        std::vector<double> dpre2(dact2.size());
        for (std::size_t i = 0; i < dact2.size(); ++i)
            dpre2[i] = dact2[i] * detail::softplus_grad(ws.pre2[i], beta);

        for (std::size_t co = 0; co < c2; ++co) {
            for (std::size_t t = 0; t < ws.t2; ++t) {
                const double* grow = dpre2.data() + (co * ws.t2 + t) * ws.f2;
                double brow = 0.0;
                for (std::size_t f = 0; f < ws.f2; ++f) brow += grow[f];
                g.conv2_b[co] += brow;
                for (std::size_t ci = 0; ci < c1; ++ci) {
                    double* wgrad = g.conv2_w.data() + (co * c1 + ci) * 9;
                    for (std::size_t dt = 0; dt < 3; ++dt)
                        for (std::size_t df = 0; df < 3; ++df) {
                            const double* src = ws.pool1.data() + (ci * ws.tp + t + dt) * ws.fp + df;
                            double acc = 0.0;
                            for (std::size_t f = 0; f < ws.f2; ++f) acc += grow[f] * src[f];
                            wgrad[dt * 3 + df] += acc;
                        }
                }
            }
        }

        std::vector<double> dact1 = backprop_act2_to_act1_from_dpre2(ws, dpre2);
        std::vector<double> dpre1(dact1.size());
        for (std::size_t i = 0; i < dact1.size(); ++i)
            dpre1[i] = dact1[i] * detail::softplus_grad(ws.pre1[i], beta);

        for (std::size_t c = 0; c < c1; ++c) {
            double* wgrad = g.conv1_w.data() + c * 9;
            for (std::size_t t = 0; t < ws.t1; ++t) {
                const double* grow = dpre1.data() + (c * ws.t1 + t) * ws.f1;
                double brow = 0.0;
                for (std::size_t f = 0; f < ws.f1; ++f) brow += grow[f];
                g.conv1_b[c] += brow;
                for (std::size_t dt = 0; dt < 3; ++dt)
                    for (std::size_t df = 0; df < 3; ++df) {
                        const double* src = ws.z.data() + (t + dt) * M + df;
                        double acc = 0.0;
                        for (std::size_t f = 0; f < ws.f1; ++f) acc += grow[f] * src[f];
                        wgrad[dt * 3 + df] += acc;
                    }
            }
        }
    }

    void ensure_shape(ToyModelParams& g) const {
        const std::size_t c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
        const std::size_t k = static_cast<std::size_t>(cfg_.class_count);
        if (g.conv1_w.size() != c1 * 9) {
            g.conv1_w.assign(c1 * 9, 0.0);
            g.conv1_b.assign(c1, 0.0);
            g.conv2_w.assign(c2 * c1 * 9, 0.0);
            g.conv2_b.assign(c2, 0.0);
            g.dense_w.assign(k * c2, 0.0);
            g.dense_b.assign(k, 0.0);
        }
    }

    const SparseMelFilterbank& filterbank(std::size_t bins) const {
        if (fb_.n_mels == 0)
            fb_ = make_sparse_filterbank(cfg_.n_mels, bins, cfg_.sample_rate, cfg_.stft.window_length);
        return fb_;
    }

    ToyModelConfig cfg_;
    ToyModelParams params_;
    mutable SparseMelFilterbank fb_;
};

}  // namespace maia
