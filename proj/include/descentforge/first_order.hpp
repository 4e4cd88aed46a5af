#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "core.hpp"
#include "linesearch.hpp"
#include "linsolve.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// step-size policies
// ---------------------------------------------------------------------------

enum class StepKind { fixed, halving, armijo, wolfe, exact_1d };

/// For fixed, eta is the step size and 0 means "derive 1/L from the problem".
/// For halving and armijo, eta is the initial trial step and 0 means 1.
/// wolfe and exact_1d ignore eta.
struct StepRule {
    StepKind kind = StepKind::fixed;
    double eta = 0.0;
};

inline StepRule fixed_step(double eta) {
    if (!(eta > 0.0)) throw ParameterError("fixed_step: eta must be positive");
    return {StepKind::fixed, eta};
}
inline StepRule auto_step() { return {StepKind::fixed, 0.0}; }
inline StepRule halving_step(double eta0 = 1.0) {
    if (!(eta0 > 0.0)) throw ParameterError("halving_step: eta0 must be positive");
    return {StepKind::halving, eta0};
}
inline StepRule armijo_step(double eta0 = 1.0) {
    if (!(eta0 > 0.0)) throw ParameterError("armijo_step: eta0 must be positive");
    return {StepKind::armijo, eta0};
}
inline StepRule wolfe_step() { return {StepKind::wolfe, 0.0}; }
inline StepRule exact_1d_step() { return {StepKind::exact_1d, 0.0}; }

namespace detail {

/// Smoothness constant for step-size derivation: the problem's L when given,
/// else the top Hessian eigenvalue at x.
inline double smoothness_bound(const Problem& problem, const Vector& x) {
    if (problem.L) {
        if (!(*problem.L > 0.0))
            throw ParameterError("smoothness_bound: problem.L must be positive");
        return *problem.L;
    }
    if (problem.oracle.hessian) {
        double l = power_iteration_lmax(problem.oracle.hessian(x));
        if (l > 0.0) return l;
    }
    throw CapabilityError(
        "smoothness_bound: provide problem.L, a Hessian oracle, or an explicit step size");
}

/// Step length along descent direction p from x.  l_cache memoizes the
/// smoothness estimate across iterations.
inline double choose_step(const Oracle& oracle, const Problem& problem, const Vector& x,
                          const Vector& p, const StepRule& rule, std::optional<double>& l_cache) {
    auto l_est = [&]() {
        if (!l_cache) l_cache = smoothness_bound(problem, x);
        return *l_cache;
    };
    switch (rule.kind) {
        case StepKind::fixed:
            return rule.eta > 0.0 ? rule.eta : 1.0 / l_est();
        case StepKind::halving:
            return halving_search(oracle, x, p, rule.eta > 0.0 ? rule.eta : 1.0).eta;
        case StepKind::armijo:
            return armijo_backtracking(oracle, x, p, rule.eta > 0.0 ? rule.eta : 1.0).eta;
        case StepKind::wolfe:
            return wolfe_search(oracle, x, p).eta;
        case StepKind::exact_1d: {
            if (!oracle.gradient)
                throw CapabilityError("choose_step: exact_1d needs a gradient oracle");
            auto dphi = [&](double eta) {
                Vector trial = x;
                axpy(eta, p, trial);
                return dot(oracle.gradient(trial), p);
            };
            if (dphi(0.0) >= 0.0) return 0.0;
            double u = 2.0 / l_est();
            int grow = 0;
            while (dphi(u) < 0.0 && grow++ < 60) u *= 2.0;
            return bisection_min(dphi, 0.0, u, 1e-14 * (1.0 + u));
        }
    }
    throw ParameterError("choose_step: unknown step rule");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gradient descent
// ---------------------------------------------------------------------------

struct GDConfig {
    StepRule step_rule{};
    double momentum_alpha = 0.0;
    StopRule stop{};
};

/// Full-gradient descent x <- x + dx with the heavy-ball recursion
/// dx = alpha * dx_prev - eta * grad f(x); alpha = 0 is plain descent and
/// step_rule exact_1d minimizes along -grad f (steepest descent).
inline Report gradient_descent(const Problem& problem, const GDConfig& config, const Vector& x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("gradient_descent: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("gradient_descent: x0 must be finite");
    if (config.momentum_alpha < 0.0)
        throw ParameterError("gradient_descent: momentum_alpha must be nonnegative");
    if (!config.stop.any_enabled())
        throw ParameterError("gradient_descent: stop rule must enable at least one criterion");

    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
    Vector dx(x.size(), 0.0);
    std::optional<double> l_cache;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        double f = oracle.value(x);
        Vector g = oracle.gradient(x);
        if (!std::isfinite(f) || !all_finite(g) || !all_finite(x)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = norm(g, Norm::l2);
        rec.step = step;
        StopReason why = push_trace(rep, config.stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;
        Vector p = scaled(-1.0, g);
        double eta = detail::choose_step(oracle, problem, x, p, config.step_rule, l_cache);
        for (std::size_t i = 0; i < x.size(); ++i) {
            dx[i] = config.momentum_alpha * dx[i] - eta * g[i];
            x[i] += dx[i];
        }
        step = eta;
    }
    rep.x = x;
    return rep;
}

// ---------------------------------------------------------------------------
// accelerated gradient
// ---------------------------------------------------------------------------

/// Default momentum-weight sequence: a warmup of zeros, then 2/k.
inline double default_gamma(long long k) { return k < 4 ? 0.0 : 2.0 / static_cast<double>(k); }

/// True when gamma(k) stays in [0,1] and prod_{i<=k} (1 - gamma(i)) >= gamma(k)^2
/// for every k <= horizon, the admissibility condition for the 1/t^2 rate.
inline bool gamma_product_ok(const std::function<double(long long)>& gamma_seq,
                             long long horizon) {
    if (!gamma_seq) throw ParameterError("gamma_product_ok: empty sequence");
    double prod = 1.0;
    for (long long k = 0; k <= horizon; ++k) {
        double g = gamma_seq(k);
        if (!(g >= 0.0) || !(g <= 1.0)) return false;
        prod *= 1.0 - g;
        if (prod + 1e-15 < g * g) return false;
    }
    return true;
}

struct AGMConfig {
    std::function<double(long long)> gamma_seq;  // empty means default_gamma
    StepRule step_rule{};
    StopRule stop{};
};

/// Accelerated gradient.  The descent step leaves from the look-ahead point
/// y = (1 - gamma_k) x + gamma_k z, where z is the running weighted average
/// of past gradient steps:
///   x+ = y - eta * grad f(y),   z+ = z - (eta / gamma_k) * grad f(y).
/// gamma == 0 freezes z and reduces exactly to gradient descent.  The
/// x-sequence is reported; y and z stay internal.
inline Report agm(const Problem& problem, const AGMConfig& config, const Vector& x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("agm: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("agm: x0 must be finite");
    if (!config.stop.any_enabled())
        throw ParameterError("agm: stop rule must enable at least one criterion");

    std::function<double(long long)> gamma =
        config.gamma_seq ? config.gamma_seq : std::function<double(long long)>(default_gamma);
    long long horizon =
        config.stop.max_iters > 0 ? std::min(config.stop.max_iters, 100000LL) : 1000;
    if (!gamma_product_ok(gamma, horizon))
        throw ParameterError("agm: gamma sequence violates prod(1 - gamma) >= gamma^2");

    Report rep;
    Vector x = x0;
    Vector z = x0;
    Vector prev_x = x0;
    std::optional<double> l_cache;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        double f = oracle.value(x);
        Vector g = oracle.gradient(x);
        if (!std::isfinite(f) || !all_finite(g) || !all_finite(x)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = norm(g, Norm::l2);
        rec.step = step;
        StopReason why = push_trace(rep, config.stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;
        double gk = gamma(k);
        Vector y = add(scaled(1.0 - gk, x), scaled(gk, z));
        Vector gy = oracle.gradient(y);
        if (!all_finite(y) || !all_finite(gy)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        Vector p = scaled(-1.0, gy);
        double eta = detail::choose_step(oracle, problem, y, p, config.step_rule, l_cache);
        x = y;
        axpy(-eta, gy, x);
        if (gk > 0.0) axpy(-eta / gk, gy, z);
        step = eta;
    }
    rep.x = x;
    return rep;
}

}  // namespace descentforge
