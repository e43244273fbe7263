#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "maia/rng.hpp"

namespace maia {

struct Candidate {
    std::vector<double> z;
    std::optional<double> fitness;
};

/// (mu/mu_w, lambda) CMA-ES state with the standard textbook strategy
/// parameters. All constants are exposed so run reports can echo them.
struct CmaState {
    std::size_t dim = 0;
    std::size_t population_size = 0;  // lambda
    std::size_t mu = 0;
    std::vector<double> weights;      // positive recombination weights, sum 1
    double mueff = 0.0;
    double c_sigma = 0.0, d_sigma = 0.0;
    double c_c = 0.0, c_1 = 0.0, c_mu = 0.0;
    double chi_n = 0.0;

    Eigen::VectorXd mean;
    double sigma = 0.0;
    Eigen::MatrixXd cov;
    Eigen::VectorXd p_sigma, p_c;
    std::uint64_t generation = 0;
    std::uint64_t seed = 0;
    Rng rng{0};

    // cached eigendecomposition of cov (B D^2 B^T)
    Eigen::MatrixXd basis;
    Eigen::VectorXd scales;  // sqrt of clamped eigenvalues
    bool factor_fresh = false;
};

inline CmaState cma_init(std::size_t dim, const std::vector<double>& mean0, double sigma0,
                         std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("cma_init: dim must be >= 1");
    if (sigma0 <= 0.0) throw std::invalid_argument("cma_init: sigma0 must be > 0");
    if (mean0.size() != dim) throw std::invalid_argument("cma_init: mean0 dimension mismatch");

    CmaState s;
    s.dim = dim;
    const double d = static_cast<double>(dim);
    s.population_size = 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(d)));
    s.mu = s.population_size / 2;

    s.weights.resize(s.mu);
    double wsum = 0.0;
    for (std::size_t i = 0; i < s.mu; ++i) {
        s.weights[i] = std::log(static_cast<double>(s.population_size + 1) / 2.0) -
                       std::log(static_cast<double>(i + 1));
        wsum += s.weights[i];
    }
    double w2 = 0.0;
    for (double& w : s.weights) {
        w /= wsum;
        w2 += w * w;
    }
    s.mueff = 1.0 / w2;

    s.c_sigma = (s.mueff + 2.0) / (d + s.mueff + 5.0);
    s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((s.mueff - 1.0) / (d + 1.0)) - 1.0) + s.c_sigma;
    s.c_c = (4.0 + s.mueff / d) / (d + 4.0 + 2.0 * s.mueff / d);
    s.c_1 = 2.0 / ((d + 1.3) * (d + 1.3) + s.mueff);
    s.c_mu = std::min(1.0 - s.c_1, 2.0 * (s.mueff - 2.0 + 1.0 / s.mueff) / ((d + 2.0) * (d + 2.0) + s.mueff));
    s.chi_n = std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));

    s.mean = Eigen::Map<const Eigen::VectorXd>(mean0.data(), static_cast<Eigen::Index>(dim));
    s.sigma = sigma0;
    s.cov = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    s.p_sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    s.p_c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    s.seed = seed;
    s.rng = Rng(splitmix64(seed ^ 0x636d616573ULL));
    return s;
}

namespace detail {

// Eigendecomposition with eigenvalues clamped at 1e-12 so numeric
// indefiniteness never halts a run.
inline void cma_factorize(CmaState& s) {
    if (s.factor_fresh) return;
    Eigen::MatrixXd sym = 0.5 * (s.cov + s.cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("cma: eigendecomposition failed");
    s.basis = es.eigenvectors();
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 1e-12);
    s.scales = ev.cwiseSqrt();
    s.factor_fresh = true;
}

}  // namespace detail

/// Samples exactly population_size candidates z_i = mean + sigma * B D n_i.
inline std::vector<Candidate> ask(CmaState& s) {
    detail::cma_factorize(s);
    const Eigen::Index d = static_cast<Eigen::Index>(s.dim);
    std::vector<Candidate> out(s.population_size);
    Eigen::VectorXd n(d);
    for (Candidate& c : out) {
        for (Eigen::Index i = 0; i < d; ++i) n[i] = s.rng.normal();
        const Eigen::VectorXd z = s.mean + s.sigma * (s.basis * (s.scales.asDiagonal() * n));
        c.z.assign(z.data(), z.data() + d);
    }
    return out;
}

/// Rank-based update (minimization): weighted recombination of the mu best,
/// cumulative step-size adaptation, rank-one + rank-mu covariance update.
/// NaN fitness ranks worst; ties keep candidate order (stable sort).
inline void tell(CmaState& s, const std::vector<Candidate>& candidates) {
    if (candidates.size() != s.population_size)
        throw std::invalid_argument("tell: candidate count must equal population_size");
    for (const Candidate& c : candidates)
        if (!c.fitness.has_value()) throw std::invalid_argument("tell: fitness not set");

    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t i) {
        const double f = *candidates[i].fitness;
        return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    const Eigen::Index d = static_cast<Eigen::Index>(s.dim);
    detail::cma_factorize(s);

    Eigen::VectorXd yw = Eigen::VectorXd::Zero(d);
    std::vector<Eigen::VectorXd> ys(s.mu);
    for (std::size_t i = 0; i < s.mu; ++i) {
        const Candidate& c = candidates[order[i]];
        Eigen::Map<const Eigen::VectorXd> z(c.z.data(), d);
        ys[i] = (z - s.mean) / s.sigma;
        yw += s.weights[i] * ys[i];
    }

    s.mean += s.sigma * yw;

    // C^{-1/2} yw via the cached factorization
    Eigen::VectorXd tmp = s.basis.transpose() * yw;
    for (Eigen::Index i = 0; i < d; ++i) tmp[i] /= s.scales[i];
    const Eigen::VectorXd c_invsqrt_yw = s.basis * tmp;

    s.p_sigma = (1.0 - s.c_sigma) * s.p_sigma +
                std::sqrt(s.c_sigma * (2.0 - s.c_sigma) * s.mueff) * c_invsqrt_yw;

    const double ps_norm = s.p_sigma.norm();
    const double expo = 2.0 * static_cast<double>(s.generation + 1);
    const double denom = std::sqrt(1.0 - std::pow(1.0 - s.c_sigma, expo));
    const bool hsig = ps_norm / denom < (1.4 + 2.0 / (static_cast<double>(s.dim) + 1.0)) * s.chi_n;

    s.p_c = (1.0 - s.c_c) * s.p_c +
            (hsig ? std::sqrt(s.c_c * (2.0 - s.c_c) * s.mueff) : 0.0) * yw;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < s.mu; ++i) rank_mu += s.weights[i] * (ys[i] * ys[i].transpose());

    const double delta_hsig = hsig ? 0.0 : s.c_c * (2.0 - s.c_c);
    s.cov = (1.0 - s.c_1 - s.c_mu) * s.cov +
            s.c_1 * (s.p_c * s.p_c.transpose() + delta_hsig * s.cov) + s.c_mu * rank_mu;
    s.cov = 0.5 * (s.cov + s.cov.transpose());

    s.sigma *= std::exp((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0));
    ++s.generation;
    s.factor_fresh = false;
}

struct CmaResult {
    std::vector<double> best_z;
    double best_fitness = std::numeric_limits<double>::infinity();
    std::uint64_t evals = 0;
};

/// Ask/evaluate/tell loop over whole generations until the target fitness is
/// reached or the next full generation would exceed max_evals. Returns the
/// best point ever seen.
inline CmaResult cma_minimize(const std::function<double(const std::vector<double>&)>& f,
                              const std::vector<double>& mean0, double sigma0,
                              std::uint64_t max_evals, double target, std::uint64_t seed) {
    CmaState s = cma_init(mean0.size(), mean0, sigma0, seed);
    if (max_evals < s.population_size)
        throw std::invalid_argument("cma_minimize: max_evals must cover one generation");

    CmaResult result;
    result.best_z = mean0;
    while (result.evals + s.population_size <= max_evals) {
        std::vector<Candidate> pop = ask(s);
        bool hit = false;
        for (Candidate& c : pop) {
            const double val = f(c.z);
            c.fitness = val;
            ++result.evals;
            if (val < result.best_fitness || result.best_z.empty()) {
                result.best_fitness = val;
                result.best_z = c.z;
            }
            if (result.best_fitness <= target) hit = true;
        }
        if (hit) break;
        tell(s, pop);
    }
    return result;
}

}  // namespace maia
