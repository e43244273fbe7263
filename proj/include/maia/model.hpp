#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "maia/audio.hpp"

namespace maia {

using ProbVector = std::vector<double>;

inline bool is_valid_prob_vector(const ProbVector& p, double tol = 1e-6) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

inline int argmax_class(const ProbVector& p) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

/// Feature map and the gradient of a class logit with respect to it,
/// both laid out channels x time x freq.
struct LayerActivations {
    std::size_t channels = 0;
    std::size_t time = 0;
    std::size_t freq = 0;
    std::vector<double> feature_map;
    std::vector<double> gradient;

    std::size_t index(std::size_t c, std::size_t t, std::size_t f) const {
        return (c * time + t) * freq + f;
    }
};

/// Black-box surface of the target classifier. Every forward pass through the
/// model bumps the query counter by exactly one; the counter is atomic so
/// concurrent querying stays consistent.
class Model {
public:
    virtual ~Model() = default;

    Model() = default;
    Model(const Model& other) : queries_(other.queries_.load()) {}
    Model& operator=(const Model& other) {
        queries_.store(other.queries_.load());
        return *this;
    }

    virtual int class_count() const = 0;
    virtual int sample_rate() const = 0;

    ProbVector predict(const Waveform& x) const {
        ++queries_;
        return do_predict(x);
    }

    std::uint64_t queries() const { return queries_.load(); }
    void reset_queries() const { queries_.store(0); }

protected:
    void count_query() const { ++queries_; }
    virtual ProbVector do_predict(const Waveform& x) const = 0;

private:
    mutable std::atomic<std::uint64_t> queries_{0};
};

/// Cross-entropy -log p_y. Consumes one model query.
inline double ce_loss(const Model& m, const Waveform& x, int label) {
    if (label < 0 || label >= m.class_count()) throw std::invalid_argument("ce_loss: invalid label");
    const ProbVector p = m.predict(x);
    return -std::log(std::max(p[label], 1e-300));
}

/// White-box surface: adds input gradients and named-layer activations, plus
/// the time-frequency front-end geometry needed to map feature maps back to
/// samples. Gradient and activation calls each run one forward pass and count
/// as one query.
class WhiteBoxModel : public Model {
public:
    std::vector<double> input_gradient(const Waveform& x, int label) const {
        count_query();
        return do_input_gradient(x, label);
    }

    LayerActivations layer_activations(const Waveform& x, int label, const std::string& layer) const {
        count_query();
        return do_layer_activations(x, label, layer);
    }

    virtual std::vector<std::string> layer_names() const = 0;
    virtual StftParams frontend_stft() const = 0;
    virtual std::size_t frontend_mel_bands() const = 0;

protected:
    virtual std::vector<double> do_input_gradient(const Waveform& x, int label) const = 0;
    virtual LayerActivations do_layer_activations(const Waveform& x, int label,
                                                  const std::string& layer) const = 0;
};

}  // namespace maia
