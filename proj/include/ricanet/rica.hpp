#pragma once

// Reconstruction-ICA objective over unit-norm filters:
//
//   sum_i || W^T (alpha W x_i) + b - x_i ||^2 + lambda * sum_i sum_j sqrt((alpha W_j x_i)^2 + eps)
//
// subject to ||W_j||_2 = 1 for every filter row j. The eps term smooths the
// L1 penalty so the objective is differentiable at zero activation; eps = 0
// recovers the plain absolute value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ricanet/errors.hpp"
#include "ricanet/rng.hpp"
#include "ricanet/tensor.hpp"

namespace ricanet {

struct RicaParams {
    Tensor W;  // k x n, one unit-norm filter per row
    double alpha = 1.0;
    Tensor b;  // n, reconstruction offset
    double lambda = 0.1;
    double eps_sparsity = 1e-6;

    std::size_t filters() const { return W.dim(0); }
    std::size_t inputs() const { return W.dim(1); }

    bool operator==(const RicaParams&) const = default;
};

inline constexpr double kDefaultEpsSparsity = 1e-6;
inline constexpr double kMinAlpha = 1e-8;
inline constexpr double kDegenerateRowNorm = 1e-30;

// Sparsity weight by 0-based layer depth: 0.1 for the first two layers, 0.01 beyond.
inline double default_lambda_for_layer(std::size_t layer_index) { return layer_index < 2 ? 0.1 : 0.01; }

inline void validate(const RicaParams& p) {
    require_rank(p.W, 2, "RicaParams.W");
    require_rank(p.b, 1, "RicaParams.b");
    if (p.b.dim(0) != p.W.dim(1)) {
        throw ShapeError("RicaParams: offset " + shape_string(p.b.shape()) + " does not match filters " +
                         shape_string(p.W.shape()));
    }
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha)) throw ConfigError("RicaParams: alpha must be positive and finite");
    if (!(p.lambda >= 0.0)) throw ConfigError("RicaParams: lambda must be non-negative");
    if (!(p.eps_sparsity >= 0.0)) throw ConfigError("RicaParams: eps_sparsity must be non-negative");
}

inline void require_batch(const RicaParams& p, const Tensor& X) {
    if (X.rank() != 2 || X.dim(1) != p.inputs()) {
        throw ShapeError("RICA minibatch " + shape_string(X.shape()) + " does not match filters " +
                         shape_string(p.W.shape()));
    }
}

// Pre-scale activations s = W x for one input row.
inline void filter_responses(const RicaParams& p, std::span<const double> x, std::span<double> s) {
    const std::size_t k = p.filters(), n = p.inputs();
    for (std::size_t j = 0; j < k; ++j) {
        const auto w = p.W.row(j);
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += w[t] * x[t];
        s[j] = acc;
    }
}

// h = alpha * W x for every row of X; the forward pass of a RICA layer.
inline Tensor encode(const RicaParams& p, const Tensor& X) {
    require_batch(p, X);
    const std::size_t m = X.dim(0), k = p.filters();
    Tensor H({m, k});
    std::vector<double> s(k);
    for (std::size_t i = 0; i < m; ++i) {
        filter_responses(p, X.row(i), s);
        auto h = H.row(i);
        for (std::size_t j = 0; j < k; ++j) h[j] = p.alpha * s[j];
    }
    return H;
}

namespace detail {

struct RowTerms {
    std::vector<double> s, h, e;
    double objective = 0.0;
};

// Reconstruction residual and objective contribution of one row.
inline void row_terms(const RicaParams& p, std::span<const double> x, RowTerms& t, std::size_t row_index) {
    const std::size_t k = p.filters(), n = p.inputs();
    t.s.resize(k);
    t.h.resize(k);
    t.e.resize(n);
    filter_responses(p, x, t.s);
    for (std::size_t j = 0; j < k; ++j) t.h[j] = p.alpha * t.s[j];
    const auto b = p.b.data();
    for (std::size_t l = 0; l < n; ++l) t.e[l] = b[l] - x[l];
    for (std::size_t j = 0; j < k; ++j) {
        const auto w = p.W.row(j);
        const double hj = t.h[j];
        for (std::size_t l = 0; l < n; ++l) t.e[l] += w[l] * hj;
    }
    double recon = 0.0;
    for (std::size_t l = 0; l < n; ++l) recon += t.e[l] * t.e[l];
    double sparsity = 0.0;
    for (std::size_t j = 0; j < k; ++j) sparsity += std::sqrt(t.h[j] * t.h[j] + p.eps_sparsity);
    t.objective = recon + p.lambda * sparsity;
    if (!std::isfinite(t.objective)) throw NumericError("RICA objective: non-finite intermediate at minibatch row", row_index);
}

} // namespace detail

inline double rica_objective(const RicaParams& p, const Tensor& X) {
    require_batch(p, X);
    detail::RowTerms t;
    double total = 0.0;
    for (std::size_t i = 0; i < X.dim(0); ++i) {
        detail::row_terms(p, X.row(i), t, i);
        total += t.objective;
    }
    return total;
}

struct RicaGradient {
    Tensor dW;
    double dalpha = 0.0;
    Tensor db;
    double objective = 0.0;  // objective at the evaluation point, same value rica_objective returns
};

// All three gradients (and the objective) in a single pass over the minibatch.
inline RicaGradient rica_gradient(const RicaParams& p, const Tensor& X) {
    require_batch(p, X);
    const std::size_t k = p.filters(), n = p.inputs();
    RicaGradient g{Tensor({k, n}), 0.0, Tensor({n}), 0.0};
    detail::RowTerms t;
    std::vector<double> gh(k);
    for (std::size_t i = 0; i < X.dim(0); ++i) {
        const auto x = X.row(i);
        detail::row_terms(p, x, t, i);
        g.objective += t.objective;
        // d/dh_j: back through W^T h, plus the smoothed |h_j|.
        for (std::size_t j = 0; j < k; ++j) {
            const auto w = p.W.row(j);
            double acc = 0.0;
            for (std::size_t l = 0; l < n; ++l) acc += w[l] * t.e[l];
            const double denom = std::sqrt(t.h[j] * t.h[j] + p.eps_sparsity);
            gh[j] = 2.0 * acc + (denom > 0.0 ? p.lambda * t.h[j] / denom : 0.0);
        }
        for (std::size_t j = 0; j < k; ++j) {
            auto dw = g.dW.row(j);
            const double a = 2.0 * t.h[j];
            const double c = p.alpha * gh[j];
            for (std::size_t l = 0; l < n; ++l) dw[l] += a * t.e[l] + c * x[l];
            g.dalpha += gh[j] * t.s[j];
        }
        auto db = g.db.data();
        for (std::size_t l = 0; l < n; ++l) db[l] += 2.0 * t.e[l];
    }
    return g;
}

inline Tensor project_row_norms(const Tensor& W) {
    require_rank(W, 2, "project_row_norms");
    Tensor out = W;
    for (std::size_t j = 0; j < W.dim(0); ++j) {
        auto row = out.row(j);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        const double norm = std::sqrt(sq);
        if (!(norm >= kDegenerateRowNorm)) throw DegenerateRowError(j);
        // Rows already unit-norm to within rounding are left untouched, which
        // makes the projection idempotent.
        if (std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) continue;
        for (double& v : row) v /= norm;
    }
    return out;
}

// Random unit-norm filters plus alpha = 1, b = 0.
inline RicaParams init_rica_params(std::size_t filters, std::size_t inputs, double lambda, double eps_sparsity,
                                   std::uint64_t seed) {
    Rng rng(seed);
    Tensor W({filters, inputs});
    for (double& v : W.data()) v = rng.normal();
    return RicaParams{project_row_norms(W), 1.0, Tensor({inputs}), lambda, eps_sparsity};
}

struct OptimizerState {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    Tensor vW;
    double valpha = 0.0;
    Tensor vb;
    std::uint64_t step_count = 0;
    std::uint64_t reinit_seed = 0;  // source for re-randomizing collapsed filter rows

    bool operator==(const OptimizerState&) const = default;
};

inline OptimizerState make_optimizer_state(const RicaParams& p, double learning_rate, double momentum,
                                           std::uint64_t reinit_seed) {
    if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
    return OptimizerState{learning_rate, momentum, Tensor(p.W.shape()), 0.0, Tensor(p.b.shape()), 0, reinit_seed};
}

struct StepResult {
    RicaParams params;
    OptimizerState state;
    double objective = 0.0;                       // objective before the update
    std::vector<std::size_t> reinitialized_rows;  // rows that collapsed and were re-randomized
};

// Momentum update from a precomputed gradient, followed by the unit-norm
// projection and the alpha floor.
inline StepResult apply_gradient(const RicaParams& p, const OptimizerState& s, const RicaGradient& g) {
    StepResult r{p, s, g.objective, {}};
    const double mu = s.momentum, lr = s.learning_rate;

    auto vW = r.state.vW.data();
    auto W = r.params.W.data();
    const auto dW = g.dW.data();
    for (std::size_t i = 0; i < vW.size(); ++i) {
        vW[i] = mu * vW[i] - lr * dW[i];
        W[i] += vW[i];
    }
    r.state.valpha = mu * r.state.valpha - lr * g.dalpha;
    r.params.alpha = std::max(r.params.alpha + r.state.valpha, kMinAlpha);
    auto vb = r.state.vb.data();
    auto b = r.params.b.data();
    const auto db = g.db.data();
    for (std::size_t i = 0; i < vb.size(); ++i) {
        vb[i] = mu * vb[i] - lr * db[i];
        b[i] += vb[i];
    }

    for (;;) {
        try {
            r.params.W = project_row_norms(r.params.W);
            break;
        } catch (const DegenerateRowError& e) {
            Rng rng(derive_seed(s.reinit_seed, s.step_count, e.row));
            auto row = r.params.W.row(e.row);
            for (double& v : row) v = rng.normal();
            for (double& v : r.state.vW.row(e.row)) v = 0.0;
            r.reinitialized_rows.push_back(e.row);
        }
    }
    ++r.state.step_count;
    return r;
}

inline StepResult sgd_step(const RicaParams& p, const OptimizerState& s, const Tensor& X) {
    return apply_gradient(p, s, rica_gradient(p, X));
}

} // namespace ricanet
