#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "core.hpp"
#include "first_order.hpp"
#include "linesearch.hpp"
#include "linsolve.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// projections
// ---------------------------------------------------------------------------

inline Vector project(const SetSpec& set, const Vector& x) {
    switch (set.kind) {
        case SetSpec::Kind::box: {
            require_same_dim(set.lo, x, "project(box)");
            Vector y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = std::clamp(x[i], set.lo[i], set.hi[i]);
            return y;
        }
        case SetSpec::Kind::l2_ball: {
            require_same_dim(set.center, x, "project(l2_ball)");
            Vector d = sub(x, set.center);
            double n = norm(d, Norm::l2);
            if (n <= set.radius) return x;
            Vector y = set.center;
            axpy(set.radius / n, d, y);
            return y;
        }
        case SetSpec::Kind::affine: {
            if (set.A.cols != x.size())
                throw DimensionError("project(affine): cols(A) != dim(x)");
            // x - A'(AA')^{-1}(Ax - b); AA' is positive definite iff A has
            // full row rank.
            Vector r = sub(matvec(set.A, x), set.b);
            Matrix aat = matmul(set.A, transpose(set.A));
            Vector w;
            try {
                w = cholesky_solve(cholesky_factor(aat), r);
            } catch (const DefinitenessError&) {
                throw RankError("project(affine): A is rank-deficient");
            }
            Vector y = x;
            axpy(-1.0, tmatvec(set.A, w), y);
            return y;
        }
        case SetSpec::Kind::orthogonal_cone:
            throw InvalidKindError("project: orthogonal_cone requires a matrix argument");
        case SetSpec::Kind::custom: {
            if (!set.projector) throw CapabilityError("project: custom set has no projector");
            Vector y = set.projector(x);
            if (!all_finite(y))
                throw EvaluationError("project: custom projector returned non-finite values");
            return y;
        }
    }
    throw InvalidKindError("project: unknown set kind");
}

/// Matrix projection: replaces every singular value by the cone scale,
/// Y = scale * U V' from the thin SVD.
inline Matrix project(const SetSpec& set, const Matrix& x) {
    if (set.kind != SetSpec::Kind::orthogonal_cone)
        throw InvalidKindError("project: matrix projection is defined for orthogonal_cone");
    SvdResult f = svd(x);
    Matrix y(x.rows, x.cols);
    std::size_t r = f.s.size();
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < r; ++k) s += f.u(i, k) * f.v(j, k);
            y(i, j) = set.scale * s;
        }
    return y;
}

// ---------------------------------------------------------------------------
// proximal operators
// ---------------------------------------------------------------------------

inline double soft_threshold(double v, double lambda) {
    if (v > lambda) return v - lambda;
    if (v < -lambda) return v + lambda;
    return 0.0;
}

inline Vector prox(const ProxSpec& spec, const Vector& x) {
    switch (spec.kind) {
        case ProxSpec::Kind::zero:
            return x;
        case ProxSpec::Kind::l1: {
            Vector y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = soft_threshold(x[i], spec.lambda);
            return y;
        }
        case ProxSpec::Kind::l2: {
            if (spec.lambda == 0.0) return x;
            double n = std::max(norm(x, Norm::l2), spec.lambda);
            return scaled(1.0 - spec.lambda / n, x);
        }
        case ProxSpec::Kind::indicator:
            if (!spec.set) throw ParameterError("prox: indicator spec has no set");
            return project(*spec.set, x);
        case ProxSpec::Kind::custom: {
            if (!spec.prox_fn) throw CapabilityError("prox: custom spec has no prox function");
            Vector y = spec.prox_fn(spec.lambda, x);
            if (!all_finite(y))
                throw EvaluationError("prox: custom prox returned non-finite values");
            return y;
        }
    }
    throw InvalidKindError("prox: unknown spec kind");
}

/// Residual of the norm-form decomposition prox_{lambda g} = x - lambda *
/// projection of x/lambda onto the dual-norm unit ball; zero up to rounding
/// when (g, ball) is a primal/dual pair.
inline double moreau_check(const ProxSpec& g, const SetSpec& dual_ball, const Vector& x,
                           double lambda) {
    if (lambda < 0.0) throw ParameterError("moreau_check: lambda must be nonnegative");
    ProxSpec gl = g;
    gl.lambda = lambda;
    Vector lhs = prox(gl, x);
    if (lambda == 0.0) return max_abs_diff(lhs, x);
    Vector rhs = x;
    axpy(-lambda, project(dual_ball, scaled(1.0 / lambda, x)), rhs);
    return max_abs_diff(lhs, rhs);
}

// ---------------------------------------------------------------------------
// proximal solvers
// ---------------------------------------------------------------------------

/// Fixed-point iteration x <- prox_{lambda f}(x).  The gnorm slot carries the
/// fixed-point residual |x - prox(x)|; f is NaN when the oracle has no value.
inline Report proximal_point(const Oracle& oracle, const Vector& x0, double lambda,
                             const StopRule& stop) {
    if (!oracle.prox) throw CapabilityError("proximal_point: oracle lacks prox");
    if (!(lambda > 0.0)) throw ParameterError("proximal_point: lambda must be positive");
    if (!all_finite(x0)) throw ParameterError("proximal_point: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("proximal_point: stop rule must enable at least one criterion");

    Report rep;
    Vector x = x0;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        Vector xn = oracle.prox(lambda, x);
        if (!all_finite(xn)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = oracle.value ? oracle.value(x) : std::numeric_limits<double>::quiet_NaN();
        rec.gnorm = norm(sub(x, xn), Norm::l2);
        rec.step = step;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        x = std::move(xn);
        step = lambda;
    }
    rep.x = x;
    return rep;
}

/// Composite minimization of f + g: x <- prox_{eta g}(x - eta grad f(x)).
/// Trace f is the composite value; gnorm is the prox-gradient mapping norm
/// |x - x+| / eta.
inline Report proximal_gradient(const Problem& problem, const ProxSpec& g, const Vector& x0,
                                const StepRule& rule, const StopRule& stop) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("proximal_gradient: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("proximal_gradient: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("proximal_gradient: stop rule must enable at least one criterion");

    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
    std::optional<double> l_cache;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        double f = oracle.value(x) + g.value(x);
        Vector grad = oracle.gradient(x);
        if (!std::isfinite(f) || !all_finite(grad) || !all_finite(x)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        Vector p = scaled(-1.0, grad);
        double eta = detail::choose_step(oracle, problem, x, p, rule, l_cache);
        Vector v = x;
        axpy(-eta, grad, v);
        ProxSpec geff = g;
        geff.lambda = g.lambda * eta;
        Vector xn = prox(geff, v);
        if (!all_finite(xn)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = norm(sub(x, xn), Norm::l2) / eta;
        rec.step = step;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;
        x = std::move(xn);
        step = eta;
    }
    rep.x = x;
    return rep;
}

/// Projected gradient.  gamma = 1 is the classical project-the-full-step
/// method; gamma in (0,1) is the relaxed two-step variant
/// x+ = x + gamma (proj(x - eta grad) - x).
inline Report projected_gradient(const Problem& problem, const SetSpec& set, const Vector& x0,
                                 const StepRule& rule, const StopRule& stop, double gamma = 1.0) {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw ParameterError("projected_gradient: gamma must lie in (0, 1]");
    if (gamma == 1.0) return proximal_gradient(problem, ProxSpec::indicator(set), x0, rule, stop);

    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("projected_gradient: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("projected_gradient: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("projected_gradient: stop rule must enable at least one criterion");

    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
    std::optional<double> l_cache;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        double f = oracle.value(x);
        Vector grad = oracle.gradient(x);
        if (!std::isfinite(f) || !all_finite(grad) || !all_finite(x)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        Vector p = scaled(-1.0, grad);
        double eta = detail::choose_step(oracle, problem, x, p, rule, l_cache);
        Vector v = x;
        axpy(-eta, grad, v);
        Vector y = project(set, v);
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = norm(sub(x, y), Norm::l2) / eta;
        rec.step = step;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;
        x = add(scaled(1.0 - gamma, x), scaled(gamma, y));
        step = eta;
    }
    rep.x = x;
    return rep;
}

namespace detail {

/// Worst l2 distance from v to the sets, the feasibility residual driving
/// the projection solvers' stop rule.
inline double max_set_distance(const std::vector<SetSpec>& sets, const Vector& v) {
    double worst = 0.0;
    for (const auto& s : sets) worst = std::max(worst, norm(sub(v, project(s, v)), Norm::l2));
    return worst;
}

inline Report projection_iteration(const std::vector<SetSpec>& sets, const Vector& x0,
                                   const StopRule& stop, const char* who,
                                   const std::function<Vector(const Vector&)>& sweep) {
    if (sets.empty()) throw ParameterError(std::string(who) + ": need at least one set");
    if (!all_finite(x0)) throw ParameterError(std::string(who) + ": x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError(std::string(who) + ": stop rule must enable at least one criterion");

    const double feas_floor = stop.grad_tol > 0.0 ? stop.grad_tol : 1e-10;
    Report rep;
    Vector x = x0;
    for (long long k = 0;; ++k) {
        double dist = max_set_distance(sets, x);
        TraceRecord rec;
        rec.k = k;
        rec.f = dist;
        rec.gnorm = dist;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            // An exhausted budget with the iterate still away from the sets
            // is a failure to converge (e.g. empty intersection), not a
            // normal cap.
            if (why == StopReason::max_iters && dist > feas_floor)
                rep.status = Status::no_convergence;
            break;
        }
        x = sweep(x);
    }
    rep.x = x;
    return rep;
}

}  // namespace detail

/// Cyclic projections: one iteration applies every projection once,
/// innermost last set first.  Trace f/gnorm carry the feasibility residual.
inline Report pocs(const std::vector<SetSpec>& sets, const Vector& x0, const StopRule& stop) {
    return detail::projection_iteration(sets, x0, stop, "pocs", [&](const Vector& v) {
        Vector y = v;
        for (std::size_t i = sets.size(); i-- > 0;) y = project(sets[i], y);
        return y;
    });
}

/// One iteration moves to the mean of the projections onto every set.
inline Report averaged_projections(const std::vector<SetSpec>& sets, const Vector& x0,
                                   const StopRule& stop) {
    return detail::projection_iteration(sets, x0, stop, "averaged_projections",
                                        [&](const Vector& v) {
                                            Vector acc(v.size(), 0.0);
                                            for (const auto& s : sets) axpy(1.0, project(s, v), acc);
                                            return scaled(1.0 / static_cast<double>(sets.size()), acc);
                                        });
}

// ---------------------------------------------------------------------------
// Frank-Wolfe
// ---------------------------------------------------------------------------

struct FWConfig {
    std::function<double(long long)> gamma_rule;  // empty: 2 / (k + 2)
    bool line_search = false;                     // exact 1-d search over [0, 1]
    StopRule stop{};
};

/// Conditional gradient: y = argmin_{y in S} grad f(x)'y via the LMO, then
/// x+ = (1 - gamma) x + gamma y.  The gnorm slot and the duality_gap extra
/// carry the certificate grad f(x)'(x - y) >= f(x) - f*.
inline Report frank_wolfe(const Problem& problem, const Vector& x0, const FWConfig& config) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("frank_wolfe: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("frank_wolfe: x0 must be finite");
    if (!config.stop.any_enabled())
        throw ParameterError("frank_wolfe: stop rule must enable at least one criterion");

    std::function<Vector(const Vector&)> lmo = oracle.lmo;
    if (!lmo) {
        if (problem.sets.empty())
            throw CapabilityError("frank_wolfe: oracle has no lmo and the problem has no set");
        const SetSpec s = problem.sets.front();
        if (s.kind == SetSpec::Kind::box) {
            lmo = [s](const Vector& grad) {
                require_same_dim(s.lo, grad, "frank_wolfe lmo(box)");
                Vector y(grad.size());
                for (std::size_t i = 0; i < grad.size(); ++i)
                    y[i] = grad[i] > 0.0 ? s.lo[i] : s.hi[i];
                return y;
            };
        } else if (s.kind == SetSpec::Kind::l2_ball) {
            lmo = [s](const Vector& grad) {
                double n = norm(grad, Norm::l2);
                if (n == 0.0) return s.center;
                Vector y = s.center;
                axpy(-s.radius / n, grad, y);
                return y;
            };
        } else {
            throw CapabilityError("frank_wolfe: built-in LMOs cover box and l2_ball sets only");
        }
    }
    if (!problem.sets.empty()) {
        double dist = norm(sub(x0, project(problem.sets.front(), x0)), Norm::l2);
        if (dist > 1e-8) throw FeasibilityError("frank_wolfe: x0 is not in the constraint set");
    }
    auto gamma_of = [&](long long k) {
        return config.gamma_rule ? config.gamma_rule(k) : 2.0 / static_cast<double>(k + 2);
    };

    Report rep;
    Vector x = x0;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        double f = oracle.value(x);
        Vector grad = oracle.gradient(x);
        if (!std::isfinite(f) || !all_finite(grad)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        Vector y = lmo(grad);
        if (!all_finite(y)) throw EvaluationError("frank_wolfe: lmo returned non-finite values");
        double gap = dot(grad, sub(x, y));
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = std::max(gap, 0.0);
        rec.step = step;
        rec.extras["duality_gap"] = gap;
        StopReason why = push_trace(rep, config.stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        double gamma;
        if (config.line_search) {
            Vector dir = sub(y, x);
            auto dphi = [&](double t) {
                Vector trial = x;
                axpy(t, dir, trial);
                return dot(oracle.gradient(trial), dir);
            };
            if (dphi(0.0) >= 0.0)
                gamma = 0.0;
            else if (dphi(1.0) <= 0.0)
                gamma = 1.0;
            else
                gamma = bisection_min(dphi, 0.0, 1.0, 1e-12);
        } else {
            gamma = std::clamp(gamma_of(k), 0.0, 1.0);
        }
        x = add(scaled(1.0 - gamma, x), scaled(gamma, y));
        step = gamma;
    }
    rep.x = x;
    return rep;
}

}  // namespace descentforge
