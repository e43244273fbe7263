#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maia/attack.hpp"
#include "maia/audio.hpp"
#include "maia/model.hpp"

namespace maia {

struct EmbeddingSet {
    std::vector<std::vector<double>> vectors;
    std::string extractor_id;
};

inline constexpr const char* kToyExtractorId = "toy-meanvar-flux-v1";

/// Fixed 18-dim descriptor: per-band mean and variance of 8-band log-mel
/// energies plus spectral-flux mean and variance. Deterministic.
inline std::vector<double> embed_toy(const Waveform& x) {
    const std::size_t bands = 8;
    const MelSpectrogram mel = mel_spectrogram(x, StftParams{}, bands);
    const std::size_t T = mel.frame_count;

    std::vector<double> out;
    out.reserve(2 * bands + 2);
    std::vector<double> means(bands, 0.0);
    for (std::size_t b = 0; b < bands; ++b) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += mel.at(t, b);
        mean /= static_cast<double>(T);
        means[b] = mean;
        out.push_back(mean);
    }
    for (std::size_t b = 0; b < bands; ++b) {
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = mel.at(t, b) - means[b];
            var += d * d;
        }
        out.push_back(var / static_cast<double>(T));
    }

    double flux_mean = 0.0, flux_var = 0.0;
    if (T > 1) {
        std::vector<double> flux(T - 1, 0.0);
        for (std::size_t t = 1; t < T; ++t) {
            double f = 0.0;
            for (std::size_t b = 0; b < bands; ++b)
                f += std::max(0.0, mel.at(t, b) - mel.at(t - 1, b));
            flux[t - 1] = f;
        }
        for (double f : flux) flux_mean += f;
        flux_mean /= static_cast<double>(flux.size());
        for (double f : flux) flux_var += (f - flux_mean) * (f - flux_mean);
        flux_var /= static_cast<double>(flux.size());
    }
    out.push_back(flux_mean);
    out.push_back(flux_var);
    return out;
}

inline EmbeddingSet embed_corpus(const std::vector<Waveform>& clips) {
    EmbeddingSet set;
    set.extractor_id = kToyExtractorId;
    set.vectors.reserve(clips.size());
    for (const Waveform& w : clips) set.vectors.push_back(embed_toy(w));
    return set;
}

namespace detail {

inline void gaussian_fit(const EmbeddingSet& s, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const std::size_t n = s.vectors.size();
    const std::size_t d = s.vectors.front().size();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.vectors[i][j];
    mu = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);  // unbiased
}

// Symmetric PSD square root; negative eigenvalues are clamped at 0.
// Throws when the matrix is rank-deficient after clamping.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a, bool require_full_rank) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw std::runtime_error("fad: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < 0.0) ev[i] = 0.0;
        if (require_full_rank && ev[i] <= 0.0)
            throw std::runtime_error("fad: rank-deficient covariance after clamping");
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Frechet distance between Gaussian fits:
/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
inline double fad(const EmbeddingSet& a, const EmbeddingSet& b) {
    if (a.extractor_id != b.extractor_id)
        throw std::invalid_argument("fad: embedding sets come from different extractors");
    if (a.vectors.empty() || b.vectors.empty()) throw std::invalid_argument("fad: empty set");
    const std::size_t d = a.vectors.front().size();
    if (b.vectors.front().size() != d) throw std::invalid_argument("fad: dimension mismatch");
    if (a.vectors.size() < d + 1 || b.vectors.size() < d + 1)
        throw std::invalid_argument("fad: need at least d+1 vectors per set");

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    detail::gaussian_fit(a, mu_a, cov_a);
    detail::gaussian_fit(b, mu_b, cov_b);

    const Eigen::MatrixXd sqrt_a = detail::psd_sqrt(cov_a, true);
    detail::psd_sqrt(cov_b, true);  // rank check on the second set
    const Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    const Eigen::MatrixXd cross = detail::psd_sqrt(inner, false);

    const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                         2.0 * cross.trace();
    return std::max(0.0, value);
}

/// Attack success rate: successes among originally-correct clips.
inline double asr(const std::vector<AttackResult>& results, const std::vector<bool>& originally_correct) {
    if (results.empty()) throw std::invalid_argument("asr: empty result list");
    if (results.size() != originally_correct.size())
        throw std::invalid_argument("asr: misaligned flag list");
    std::size_t correct = 0, hits = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!originally_correct[i]) continue;
        ++correct;
        if (results[i].success) ++hits;
    }
    if (correct == 0) throw std::runtime_error("asr: no originally-correct clips");
    return static_cast<double>(hits) / static_cast<double>(correct);
}

struct EvalReport {
    double asr = 0.0;
    double accuracy_post = 0.0;
    double fad = 0.0;
    double lsd_mean = 0.0;
    std::size_t total = 0;
    std::size_t originally_correct = 0;
    std::size_t successes = 0;
    std::string extractor_id;
};

/// Corpus-level metrics over aligned (original, attack result) pairs.
inline EvalReport evaluate_corpus(const std::vector<Waveform>& originals,
                                  const std::vector<AttackResult>& results, const Model& m,
                                  const StftParams& stft_params) {
    if (originals.size() != results.size())
        throw std::invalid_argument("evaluate_corpus: misaligned corpora");
    if (originals.empty()) throw std::invalid_argument("evaluate_corpus: empty corpus");

    EvalReport report;
    report.total = originals.size();
    report.extractor_id = kToyExtractorId;

    std::vector<bool> correct(originals.size(), false);
    std::size_t post_correct = 0;
    double lsd_sum = 0.0;
    std::vector<Waveform> adversarials;
    adversarials.reserve(results.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const ProbVector p = m.predict(originals[i]);
        correct[i] = argmax_class(p) == results[i].original_label;
        if (correct[i]) ++report.originally_correct;
        if (results[i].success) ++report.successes;
        if (results[i].final_label == results[i].original_label) ++post_correct;
        lsd_sum += lsd(originals[i], results[i].adversarial, stft_params);
        adversarials.push_back(results[i].adversarial);
    }

    report.asr = asr(results, correct);
    report.accuracy_post = static_cast<double>(post_correct) / static_cast<double>(report.total);
    report.lsd_mean = lsd_sum / static_cast<double>(report.total);
    report.fad = fad(embed_corpus(originals), embed_corpus(adversarials));
    return report;
}

}  // namespace maia
