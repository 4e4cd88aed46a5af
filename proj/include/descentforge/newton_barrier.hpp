#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/first_order.hpp"
#include "descentforge/linesearch.hpp"
#include "descentforge/linsolve.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// KKT systems
// ---------------------------------------------------------------------------

/// One linearized optimality system for an equality-constrained step:
///   [[H', A'], [A, 0]] [p; nu] = -[grad; residual_primal].
struct KKTSystem {
    Matrix H;                // symmetric Hessian block, d x d
    Matrix A;                // equality Jacobian, m2 x d
    Vector grad;             // objective gradient at the current point
    Vector residual_primal;  // Ax - b (zero rows when the point is feasible)
};

namespace detail {

inline void validate_kkt(const KKTSystem& sys) {
    std::size_t d = sys.H.rows, m = sys.A.rows;
    if (sys.H.cols != d) throw DimensionError("solve_kkt: H must be square");
    if (sys.grad.size() != d) throw DimensionError("solve_kkt: grad dimension mismatch");
    if (m > 0 && sys.A.cols != d) throw DimensionError("solve_kkt: A column count mismatch");
    if (sys.residual_primal.size() != m)
        throw DimensionError("solve_kkt: primal residual dimension mismatch");
}

}  // namespace detail

/// Dense (d+m2) x (d+m2) assembly of the block matrix above.
inline Matrix kkt_matrix(const KKTSystem& sys) {
    detail::validate_kkt(sys);
    std::size_t d = sys.H.rows, m = sys.A.rows;
    Matrix big(d + m, d + m);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) big(i, j) = sys.H(j, i);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            big(j, d + i) = sys.A(i, j);
            big(d + i, j) = sys.A(i, j);
        }
    return big;
}

/// Solves the block system for the step p and multiplier nu.  Uses the
/// Schur-complement elimination when H is SPD and falls back to LU on the
/// assembled matrix otherwise.  Rank deficiency surfaces as
/// SingularMatrixError from the underlying factorization.
inline std::pair<Vector, Vector> solve_kkt(const KKTSystem& sys) {
    detail::validate_kkt(sys);
    std::size_t d = sys.H.rows, m = sys.A.rows;
    if (m == 0) return {solve_linear(sys.H, scaled(-1.0, sys.grad)), Vector{}};

    bool spd = detail::nearly_symmetric(sys.H);
    if (spd) {
        try {
            cholesky_factor(sys.H);
        } catch (const DefinitenessError&) {
            spd = false;
        }
    }
    if (spd) {
        BlockSystem bs;
        bs.M11 = sys.H;
        bs.M12 = transpose(sys.A);
        bs.M21 = sys.A;
        bs.M22 = Matrix(m, m);
        bs.q1 = scaled(-1.0, sys.grad);
        bs.q2 = scaled(-1.0, sys.residual_primal);
        return solve_schur(bs);
    }
    Matrix big = kkt_matrix(sys);
    Vector q(d + m);
    for (std::size_t i = 0; i < d; ++i) q[i] = -sys.grad[i];
    for (std::size_t i = 0; i < m; ++i) q[d + i] = -sys.residual_primal[i];
    Vector z = solve_linear(big, q, SolveMethod::lu);
    Vector p(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
    Vector nu(z.begin() + static_cast<std::ptrdiff_t>(d), z.end());
    return {std::move(p), std::move(nu)};
}

// ---------------------------------------------------------------------------
// Newton's method, unconstrained
// ---------------------------------------------------------------------------

namespace detail {

inline Vector newton_direction(const Matrix& h, const Vector& g, long long k) {
    try {
        return solve_linear(h, scaled(-1.0, g));
    } catch (const SingularMatrixError&) {
        SvdResult dec = svd(h);
        double smax = dec.s.empty() ? 0.0 : dec.s.front();
        double smin = dec.s.empty() ? 0.0 : dec.s.back();
        double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        std::ostringstream msg;
        msg << "newton_unconstrained: singular Hessian at iteration " << k
            << " (condition estimate " << cond << ")";
        throw SingularMatrixError(msg.str());
    }
}

}  // namespace detail

/// Damped Newton: x <- x + eta * p with H p = -grad f, solved by Cholesky
/// when the Hessian is SPD and LU otherwise.  A fixed step rule with eta 0
/// takes the natural full step eta = 1; any other rule damps by line search.
inline Report newton_unconstrained(const Problem& problem, const StepRule& step_rule,
                                   const StopRule& stop, const Vector& x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient || !oracle.hessian)
        throw CapabilityError(
            "newton_unconstrained: oracle must provide value, gradient, and hessian");
    if (!all_finite(x0)) throw ParameterError("newton_unconstrained: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("newton_unconstrained: stop rule must enable at least one criterion");

    Report rep;
    Vector x = x0;
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
        double gn = norm(g, Norm::l2);
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = gn;
        rec.step = step;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;
        Vector p = detail::newton_direction(oracle.hessian(x), g, k);
        double eta;
        if (gn == 0.0) {
            eta = 0.0;  // stationary already; nothing for a line search to do
        } else if (step_rule.kind == StepKind::fixed) {
            eta = step_rule.eta > 0.0 ? step_rule.eta : 1.0;
        } else {
            eta = detail::choose_step(oracle, problem, x, p, step_rule, l_cache);
        }
        axpy(eta, p, x);
        step = eta;
    }
    rep.x = x;
    return rep;
}

// ---------------------------------------------------------------------------
// Newton's method, equality constrained
// ---------------------------------------------------------------------------

namespace detail {

/// Shared body for the public full-step solver and the damped barrier
/// stages.  The trace gnorm is the stacked KKT residual
///   sqrt(|grad + A'nu|^2 + |Ax - b|^2)
/// with the multiplier from the solve at that iterate, so grad_tol certifies
/// stationarity and feasibility together.
inline Report newton_equality_core(const Oracle& oracle, const Matrix& A, const Vector& b,
                                   const Vector& x0, const StopRule& stop, bool damped) {
    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
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
        KKTSystem sys{oracle.hessian(x), A, g, sub(matvec(A, x), b)};
        auto [p, nu] = solve_kkt(sys);
        Vector st = add(g, tmatvec(A, nu));
        double res = std::sqrt(dot(st, st) + dot(sys.residual_primal, sys.residual_primal));

        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = res;
        rec.step = step;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            rep.aux["nu"] = nu;
            break;
        }
        prev_x = x;
        double eta = 1.0;
        if (damped) {
            if (dot(g, p) < 0.0) {
                eta = armijo_backtracking(oracle, x, p, 1.0).eta;
            } else {
                eta = norm(p, Norm::l2) == 0.0 ? 0.0 : 1.0;
            }
        }
        axpy(eta, p, x);
        step = eta;
    }
    rep.x = x;
    return rep;
}

}  // namespace detail

/// Equality-constrained Newton.  Each iteration solves the KKT block system
/// whose right-hand side carries the primal residual Ax - b, so an
/// infeasible start is repaired by the first full step and stays repaired.
/// With infeasible_start false, x0 must already satisfy ||Ax0 - b|| <= 1e-10.
inline Report newton_equality(const Problem& problem, const Vector& x0, const StopRule& stop,
                              bool infeasible_start = false) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient || !oracle.hessian)
        throw CapabilityError("newton_equality: oracle must provide value, gradient, and hessian");
    if (!problem.eq) throw CapabilityError("newton_equality: problem has no equality constraints");
    const Matrix& A = problem.eq->A;
    const Vector& b = problem.eq->b;
    if (A.cols != x0.size()) throw DimensionError("newton_equality: A column count != dim of x0");
    if (b.size() != A.rows) throw DimensionError("newton_equality: b size != row count of A");
    if (!all_finite(x0)) throw ParameterError("newton_equality: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("newton_equality: stop rule must enable at least one criterion");
    if (!infeasible_start) {
        double r = norm(sub(matvec(A, x0), b), Norm::l2);
        if (r > 1e-10) {
            std::ostringstream msg;
            msg << "newton_equality: x0 violates Ax = b (residual " << r
                << "); pass infeasible_start=true";
            throw FeasibilityError(msg.str());
        }
    }
    return detail::newton_equality_core(oracle, A, b, x0, stop, /*damped=*/false);
}

// ---------------------------------------------------------------------------
// log-barrier interior point
// ---------------------------------------------------------------------------

/// Outer path-following schedule for the log-barrier solver.  Each stage
/// minimizes f(x) - (1/t) sum_i log(-y_i(x)) to the inner tolerance, then
/// multiplies t by mu_factor; the loop ends once the certified gap m1/t
/// drops to eps_gap.  single_shot solves one stage at t0 and stops, which
/// trades the staged schedule's robustness for a single large-t solve.
struct BarrierConfig {
    double t0 = 1.0;
    double mu_factor = 10.0;
    double eps_gap = 1e-6;
    StopRule inner{1e-8, 0.0, 0.0, 200};
    bool single_shot = false;
};

namespace detail {

/// Barrier objective for one stage.  Outside the strictly feasible region
/// the value is +infinity, which makes any line search reject the trial
/// point before its sufficient-decrease test.
inline Oracle barrier_oracle(const Problem& problem, double t) {
    Oracle o;
    o.value = [&problem, t](const Vector& x) {
        double v = problem.oracle.value(x);
        for (const Oracle& yi : problem.ineq_constraints) {
            double y = yi.value(x);
            if (!(y < 0.0)) return std::numeric_limits<double>::infinity();
            v -= std::log(-y) / t;
        }
        return v;
    };
    o.gradient = [&problem, t](const Vector& x) {
        Vector g = problem.oracle.gradient(x);
        for (const Oracle& yi : problem.ineq_constraints) {
            double lam = -1.0 / (t * yi.value(x));
            axpy(lam, yi.gradient(x), g);
        }
        return g;
    };
    o.hessian = [&problem, t](const Vector& x) {
        Matrix h = problem.oracle.hessian(x);
        for (const Oracle& yi : problem.ineq_constraints) {
            double y = yi.value(x);
            Vector gy = yi.gradient(x);
            Matrix hy = yi.hessian(x);
            double cg = 1.0 / (t * y * y);
            double ch = -1.0 / (t * y);
            for (std::size_t i = 0; i < h.rows; ++i)
                for (std::size_t j = 0; j < h.cols; ++j)
                    h(i, j) += cg * gy[i] * gy[j] + ch * hy(i, j);
        }
        return h;
    };
    return o;
}

}  // namespace detail

/// Log-barrier interior point for inequality (and optional equality)
/// constraints from a strictly feasible start.  One trace record per outer
/// stage carries the true objective value, the stage's t and certified gap
/// m1/t, and the dual bound f(x) - m1/t; aux holds the barrier multipliers
/// lambda_i(t) = -1/(t y_i(x)) per stage and at exit.
inline Report interior_point(const Problem& problem, const BarrierConfig& barrier,
                             const Vector& x0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient || !oracle.hessian)
        throw CapabilityError("interior_point: oracle must provide value, gradient, and hessian");
    for (std::size_t i = 0; i < problem.m1(); ++i) {
        const Oracle& yi = problem.ineq_constraints[i];
        if (!yi.value || !yi.gradient || !yi.hessian)
            throw CapabilityError("interior_point: inequality constraint " + std::to_string(i) +
                                  " must provide value, gradient, and hessian");
    }
    if (!(barrier.t0 > 0.0)) throw ParameterError("interior_point: t0 must be positive");
    if (!(barrier.mu_factor > 1.0))
        throw ParameterError("interior_point: mu_factor must exceed 1");
    if (!(barrier.eps_gap > 0.0)) throw ParameterError("interior_point: eps_gap must be positive");
    if (!barrier.inner.any_enabled())
        throw ParameterError("interior_point: inner stop rule must enable at least one criterion");
    if (!all_finite(x0)) throw ParameterError("interior_point: x0 must be finite");

    std::string violated;
    for (std::size_t i = 0; i < problem.m1(); ++i) {
        if (!(problem.ineq_constraints[i].value(x0) < 0.0)) {
            if (!violated.empty()) violated += ", ";
            violated += std::to_string(i);
        }
    }
    if (!violated.empty())
        throw FeasibilityError("interior_point: x0 is not strictly feasible: y_i(x0) >= 0 for i in {" +
                               violated + "}");
    if (problem.m2() > 0) {
        const Matrix& A = problem.eq->A;
        if (A.cols != x0.size())
            throw DimensionError("interior_point: A column count != dim of x0");
        if (problem.eq->b.size() != A.rows)
            throw DimensionError("interior_point: b size != row count of A");
        if (norm(sub(matvec(A, x0), problem.eq->b), Norm::l2) > 1e-10)
            throw FeasibilityError("interior_point: x0 violates the equality constraints");
    }

    const double m1 = static_cast<double>(problem.m1());
    Report rep;
    Vector x = x0;
    double t = barrier.t0;
    bool stages_ok = true;
    for (long long stage = 0;; ++stage) {
        Oracle bo = detail::barrier_oracle(problem, t);
        Report inner;
        if (problem.m2() > 0) {
            inner = detail::newton_equality_core(bo, problem.eq->A, problem.eq->b, x,
                                                 barrier.inner, /*damped=*/true);
        } else {
            Problem stage_problem;
            stage_problem.oracle = bo;
            stage_problem.d = problem.d ? problem.d : x.size();
            inner = newton_unconstrained(stage_problem, armijo_step(1.0), barrier.inner, x);
        }
        x = inner.x;
        if (inner.status != Status::converged) stages_ok = false;

        double gap = m1 / t;
        TraceRecord rec;
        rec.k = stage;
        rec.f = oracle.value(x);
        if (!inner.trace.empty()) rec.gnorm = inner.trace.back().gnorm;
        rec.extras["t"] = t;
        rec.extras["gap"] = gap;
        rec.extras["dual_bound"] = rec.f - gap;
        rec.extras["inner_iters"] =
            static_cast<double>(inner.trace.empty() ? 0 : inner.trace.back().k);
        rec.extras["inner_converged"] = inner.status == Status::converged ? 1.0 : 0.0;
        rep.trace.push_back(std::move(rec));

        Vector lam(problem.m1());
        for (std::size_t i = 0; i < problem.m1(); ++i)
            lam[i] = -1.0 / (t * problem.ineq_constraints[i].value(x));
        rep.aux["lambda_stage_" + std::to_string(stage)] = lam;
        rep.aux["lambda"] = std::move(lam);
        if (auto it = inner.aux.find("nu"); it != inner.aux.end()) rep.aux["nu"] = it->second;

        if (inner.status == Status::diverged) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_stage"] = static_cast<double>(stage);
            break;
        }
        if (barrier.single_shot || gap <= barrier.eps_gap) {
            rep.stats["t_final"] = t;
            rep.stats["gap"] = gap;
            rep.status = stages_ok ? Status::converged : Status::no_convergence;
            break;
        }
        t *= barrier.mu_factor;
    }
    rep.x = x;
    return rep;
}

// ---------------------------------------------------------------------------
// KKT residuals
// ---------------------------------------------------------------------------

/// First-order optimality report card at (x, lambda, nu): all five fields at
/// zero (to tolerance) certify a KKT point.
struct KKTResiduals {
    double stationarity = 0.0;  // |grad f + sum lambda_i grad y_i + A'nu|_2
    double primal_ineq = 0.0;   // max_i max(y_i(x), 0)
    double primal_eq = 0.0;     // |Ax - b|_inf
    double dual_feas = 0.0;     // max_i max(-lambda_i, 0)
    double comp_slack = 0.0;    // max_i |lambda_i y_i(x)|
};

inline KKTResiduals kkt_residuals(const Problem& problem, const Vector& x, const Vector& lambda,
                                  const Vector& nu) {
    if (lambda.size() != problem.m1())
        throw DimensionError("kkt_residuals: lambda size != number of inequality constraints");
    if (nu.size() != problem.m2())
        throw DimensionError("kkt_residuals: nu size != number of equality rows");
    if (!problem.oracle.gradient)
        throw CapabilityError("kkt_residuals: oracle lacks a gradient");

    KKTResiduals r;
    Vector st = problem.oracle.gradient(x);
    for (std::size_t i = 0; i < problem.m1(); ++i) {
        const Oracle& yi = problem.ineq_constraints[i];
        if (!yi.value || !yi.gradient)
            throw CapabilityError("kkt_residuals: inequality constraint " + std::to_string(i) +
                                  " must provide value and gradient");
        double y = yi.value(x);
        axpy(lambda[i], yi.gradient(x), st);
        r.primal_ineq = std::max(r.primal_ineq, std::max(y, 0.0));
        r.dual_feas = std::max(r.dual_feas, std::max(-lambda[i], 0.0));
        r.comp_slack = std::max(r.comp_slack, std::fabs(lambda[i] * y));
    }
    if (problem.m2() > 0) {
        st = add(st, tmatvec(problem.eq->A, nu));
        r.primal_eq = norm(sub(matvec(problem.eq->A, x), problem.eq->b), Norm::linf);
    }
    r.stationarity = norm(st, Norm::l2);
    return r;
}

}  // namespace descentforge
