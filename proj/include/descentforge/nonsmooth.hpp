#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/proximal.hpp"
#include "descentforge/rng.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// smooth surrogates for the absolute value
// ---------------------------------------------------------------------------

enum class HuberKind { huber, pseudo_huber };

struct HuberParams {
    double mu = 1.0;
    HuberKind kind = HuberKind::huber;
};

struct ScalarValueGrad {
    double value = 0.0;
    double derivative = 0.0;
};

/// Piecewise-quadratic (huber) or hyperbolic (pseudo_huber) smoothing of |x|.
/// The huber branch is x^2/(2 mu) inside [-mu, mu] and |x| - mu/2 outside,
/// which keeps value and derivative continuous at |x| = mu.
inline ScalarValueGrad huber(double x, const HuberParams& p) {
    if (!(p.mu > 0.0)) throw ParameterError("huber: mu must be positive");
    if (p.kind == HuberKind::pseudo_huber) {
        double r = x / p.mu;
        double s = std::sqrt(r * r + 1.0);
        return {s - 1.0, r / (p.mu * s)};
    }
    double ax = std::fabs(x);
    if (ax <= p.mu) return {x * x / (2.0 * p.mu), x / p.mu};
    return {ax - p.mu / 2.0, x > 0.0 ? 1.0 : -1.0};
}

// ---------------------------------------------------------------------------
// subdifferentials
// ---------------------------------------------------------------------------

/// Interval of valid slopes at a point of a scalar convex function.
struct Subdifferential1D {
    double lo = 0.0;
    double hi = 0.0;

    bool singleton() const { return lo == hi; }
    double midpoint() const { return 0.5 * (lo + hi); }
};

inline Subdifferential1D subdiff_abs(double x) {
    if (x > 0.0) return {1.0, 1.0};
    if (x < 0.0) return {-1.0, -1.0};
    return {-1.0, 1.0};
}

/// Deterministic subgradient of the l1 norm: sign coordinate-wise, with the
/// interval midpoint (zero) chosen at kinks so reruns are reproducible.
inline Vector subgrad_l1(const Vector& x) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = subdiff_abs(x[i]).midpoint();
    return g;
}

// ---------------------------------------------------------------------------
// subgradient descent family
// ---------------------------------------------------------------------------

enum class SubgradientMode { full, stochastic, minibatch };

struct SubgradientConfig {
    double eta0 = 1.0;
    StepSchedule schedule = StepSchedule::constant;
    std::size_t batch = 1;      // minibatch mode only
    std::uint64_t seed = 0;     // sampling stream for the stochastic modes
    StopRule stop;
};

/// x <- Pi_S(x - eta_k g) with g any subgradient (full mode), one sampled
/// term's subgradient (stochastic), or a batch average (minibatch).  The
/// objective is not monotone along these iterates, so every record carries the
/// best value seen so far in extras["best_f"].
inline Report subgradient_method(const Problem& problem, SubgradientMode mode,
                                 const std::optional<SetSpec>& set,
                                 const SubgradientConfig& config, Vector x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value) throw CapabilityError("subgradient_method: oracle lacks value");
    if (mode == SubgradientMode::full && !oracle.subgradient)
        throw CapabilityError("subgradient_method: oracle lacks subgradient");
    if (mode != SubgradientMode::full) {
        if (!oracle.term_gradient || oracle.term_count == 0)
            throw CapabilityError("subgradient_method: oracle lacks per-term subgradients");
        if (mode == SubgradientMode::minibatch &&
            (config.batch == 0 || config.batch > oracle.term_count))
            throw ParameterError("subgradient_method: batch must be in [1, term_count]");
    }
    if (!(config.eta0 > 0.0)) throw ParameterError("subgradient_method: eta0 must be positive");
    if (!config.stop.any_enabled())
        throw ParameterError("subgradient_method: no stopping criterion enabled");
    if (!all_finite(x0)) throw ParameterError("subgradient_method: x0 is not finite");

    Rng rng(config.seed, "subgradient");
    std::vector<std::size_t> order(mode == SubgradientMode::minibatch ? oracle.term_count : 0);
    std::iota(order.begin(), order.end(), std::size_t{0});

    Report rep;
    rep.x = std::move(x0);
    double best = std::numeric_limits<double>::infinity();
    double step_taken = 0.0;
    Vector prev_x = rep.x;

    for (long long k = 0;; ++k) {
        TraceRecord rec;
        rec.k = k;
        rec.f = oracle.value(rep.x);
        rec.step = step_taken;

        Vector g;
        switch (mode) {
            case SubgradientMode::full:
                g = oracle.subgradient(rep.x);
                break;
            case SubgradientMode::stochastic: {
                std::size_t i = rng.below(oracle.term_count);
                g = oracle.term_gradient(i, rep.x);
                rec.extras["sampled_index"] = static_cast<double>(i);
                break;
            }
            case SubgradientMode::minibatch: {
                rng.shuffle(order);
                g = Vector(rep.x.size(), 0.0);
                for (std::size_t t = 0; t < config.batch; ++t)
                    axpy(1.0, oracle.term_gradient(order[t], rep.x), g);
                for (double& v : g) v /= static_cast<double>(config.batch);
                break;
            }
        }
        rec.gnorm = norm(g, Norm::l2);

        bool finite = std::isfinite(rec.f) && all_finite(g);
        if (finite) best = std::min(best, rec.f);
        rec.extras["best_f"] = best;

        StopReason why = push_trace(rep, config.stop, rec);
        if (!finite) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        step_taken = schedule_eta(config.schedule, config.eta0, k + 1);
        axpy(-step_taken, g, rep.x);
        if (set) rep.x = project(*set, rep.x);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// coordinate descent
// ---------------------------------------------------------------------------

enum class CoordOrder { cyclic };

/// Gauss-Seidel coordinate minimization: within a sweep each coordinate update
/// sees the coordinates already updated in that sweep.  One trace record per
/// sweep; gnorm is the gradient norm when the oracle provides a gradient and
/// the sweep displacement otherwise.
inline Report coordinate_descent(const Problem& problem,
                                 const std::function<double(std::size_t, const Vector&)>& coord_solver,
                                 CoordOrder /*order*/, const StopRule& stop, Vector x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value) throw CapabilityError("coordinate_descent: oracle lacks value");
    if (!coord_solver) throw ParameterError("coordinate_descent: coord_solver is empty");
    if (!stop.any_enabled())
        throw ParameterError("coordinate_descent: no stopping criterion enabled");
    if (!all_finite(x0)) throw ParameterError("coordinate_descent: x0 is not finite");

    Report rep;
    rep.x = std::move(x0);
    double last_delta = 0.0;

    for (long long k = 0;; ++k) {
        TraceRecord rec;
        rec.k = k;
        rec.f = oracle.value(rep.x);
        if (oracle.gradient)
            rec.gnorm = norm(oracle.gradient(rep.x), Norm::l2);
        else if (k > 0)
            rec.gnorm = last_delta;

        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        Vector before = rep.x;
        for (std::size_t j = 0; j < rep.x.size(); ++j) {
            double v = coord_solver(j, rep.x);
            if (!std::isfinite(v))
                throw EvaluationError("coordinate_descent: update of coordinate " +
                                      std::to_string(j) + " is not finite");
            rep.x[j] = v;
        }
        last_delta = norm(sub(rep.x, before), Norm::l2);
    }
    return rep;
}

/// Cyclic coordinate descent for 0.5 ||y - X beta||^2 + lambda ||beta||_1
/// using the closed-form single-coordinate minimizer
///   beta_j = s_{lambda/||x_j||^2}( x_j' (y - X_{-j} beta_{-j}) / ||x_j||^2 ).
/// gnorm reports the worst coordinate-wise optimality violation:
/// |x_j' r| - lambda clamped at zero where beta_j = 0, and
/// |x_j' r - lambda sign(beta_j)| elsewhere.
inline Report lasso_cd(const Matrix& x, const Vector& y, double lambda,
                       const StopRule& stop, Vector beta0) {
    if (x.rows != y.size())
        throw DimensionError("lasso_cd: X rows and y length differ");
    if (beta0.size() != x.cols)
        throw DimensionError("lasso_cd: beta0 length and X columns differ");
    if (lambda < 0.0) throw ParameterError("lasso_cd: lambda must be nonnegative");
    if (!stop.any_enabled()) throw ParameterError("lasso_cd: no stopping criterion enabled");
    if (!all_finite(beta0)) throw ParameterError("lasso_cd: beta0 is not finite");

    Vector col_sq(x.cols, 0.0);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t i = 0; i < x.rows; ++i) col_sq[j] += x(i, j) * x(i, j);
        if (col_sq[j] == 0.0)
            throw DivisionError("lasso_cd: column " + std::to_string(j) + " of X is zero");
    }

    Report rep;
    rep.x = std::move(beta0);
    Vector r = sub(y, matvec(x, rep.x));

    auto objective = [&]() {
        return 0.5 * dot(r, r) + lambda * norm(rep.x, Norm::l1);
    };
    auto kkt_violation = [&]() {
        double worst = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            double corr = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) corr += x(i, j) * r[i];
            double v = rep.x[j] == 0.0
                           ? std::max(0.0, std::fabs(corr) - lambda)
                           : std::fabs(corr - lambda * (rep.x[j] > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, v);
        }
        return worst;
    };

    for (long long k = 0;; ++k) {
        TraceRecord rec;
        rec.k = k;
        rec.f = objective();
        rec.gnorm = kkt_violation();

        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        for (std::size_t j = 0; j < x.cols; ++j) {
            double rho = col_sq[j] * rep.x[j];
            for (std::size_t i = 0; i < x.rows; ++i) rho += x(i, j) * r[i];
            double next = soft_threshold(rho, lambda) / col_sq[j];
            double delta = next - rep.x[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < x.rows; ++i) r[i] -= x(i, j) * delta;
                rep.x[j] = next;
            }
        }
    }
    return rep;
}

}  // namespace descentforge
