#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "maia/rng.hpp"
#include "maia/synth.hpp"
#include "maia/toy_model.hpp"

namespace maia {

struct TrainResult {
    ToyModel model;
    std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

namespace detail {

struct AdamSlot {
    std::vector<double> m, v;
};

inline void adam_update(std::vector<double>& w, const std::vector<double>& g, AdamSlot& slot,
                        double lr, double t, double batch_scale) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (slot.m.size() != w.size()) {
        slot.m.assign(w.size(), 0.0);
        slot.v.assign(w.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] * batch_scale;
        slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
        slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
        w[i] -= lr * (slot.m[i] / c1) / (std::sqrt(slot.v[i] / c2) + eps);
    }
}

}  // namespace detail

/// Deterministic mini-batch Adam training of the toy classifier.
/// Feature images are precomputed once; shuffling, init, and updates are all
/// driven by `seed`, so the same call yields bit-identical parameters.
inline TrainResult train_toy(const std::vector<LabeledClip>& data, int epochs, double lr,
                             std::uint64_t seed, const ToyModelConfig& cfg = ToyModelConfig{}) {
    if (data.empty()) throw std::invalid_argument("train_toy: empty dataset");

    TrainResult result{ToyModel(cfg, seed), {}};
    ToyModel& model = result.model;

    std::vector<ToyModel::FeatureImage> images;
    images.reserve(data.size());
    for (const LabeledClip& clip : data) images.push_back(model.features(clip.audio));

    Rng rng(splitmix64(seed ^ 0x747261696eULL));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t batch_size = 32;
    detail::AdamSlot s_c1w, s_c1b, s_c2w, s_c2b, s_dw, s_db;
    double step = 0.0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates with our own RNG keeps the permutation reproducible
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
            const std::size_t end = std::min(begin + batch_size, order.size());
            ToyModelParams grads;
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t idx = order[i];
                batch_loss += model.train_step(images[idx], data[idx].label, grads);
            }
            const double scale = 1.0 / static_cast<double>(end - begin);
            step += 1.0;
            ToyModelParams& p = model.mutable_params();
            detail::adam_update(p.conv1_w, grads.conv1_w, s_c1w, lr, step, scale);
            detail::adam_update(p.conv1_b, grads.conv1_b, s_c1b, lr, step, scale);
            detail::adam_update(p.conv2_w, grads.conv2_w, s_c2w, lr, step, scale);
            detail::adam_update(p.conv2_b, grads.conv2_b, s_c2b, lr, step, scale);
            detail::adam_update(p.dense_w, grads.dense_w, s_dw, lr, step, scale);
            detail::adam_update(p.dense_b, grads.dense_b, s_db, lr, step, scale);
            epoch_loss += batch_loss;
            seen += end - begin;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    return result;
}

/// Fraction of clips whose argmax prediction matches the label.
inline double accuracy(const ToyModel& model, const std::vector<LabeledClip>& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const LabeledClip& clip : data) {
        const ProbVector p = model.predict_image(model.features(clip.audio));
        if (argmax_class(p) == clip.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace maia
