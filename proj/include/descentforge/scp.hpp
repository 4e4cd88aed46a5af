#pragma once
// Sequential convex programming: convex surrogates built by tangent,
// curvature-clipped quadratic, or frozen quasi-linear approximation, box and
// ellipse trust regions, an exact penalty merit function, and the
// accept/reject loop that grows or shrinks the region by the ratio of
// predicted to realized decrease.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/linsolve.hpp"
#include "descentforge/newton_barrier.hpp"
#include "descentforge/proximal.hpp"

namespace descentforge {

/// Region around the current iterate that the convexified subproblem is
/// restricted to.  A box bounds each coordinate displacement by a per-axis
/// radius; an ellipse bounds (x - center)' inv(P) (x - center) by rho.
struct TrustRegion {
    enum class Kind { box, ellipse };
    Kind kind = Kind::box;
    Vector center;
    Vector radii;
    Matrix p;
    double rho = 0.0;

    static TrustRegion box(Vector center, Vector radii) {
        TrustRegion tr;
        tr.kind = Kind::box;
        tr.center = std::move(center);
        tr.radii = std::move(radii);
        return tr;
    }
    static TrustRegion ellipse(Vector center, Matrix p, double rho) {
        TrustRegion tr;
        tr.kind = Kind::ellipse;
        tr.center = std::move(center);
        tr.p = std::move(p);
        tr.rho = rho;
        return tr;
    }
};

inline void validate_trust_region(const TrustRegion& tr) {
    if (tr.kind == TrustRegion::Kind::box) {
        if (tr.radii.size() != tr.center.size())
            throw DimensionError("trust region: one radius per coordinate required");
        for (double r : tr.radii)
            if (!(r > 0.0)) throw ParameterError("trust region: box radii must be positive");
        return;
    }
    if (tr.p.rows != tr.center.size() || tr.p.cols != tr.center.size())
        throw DimensionError("trust region: shape matrix must match the center dimension");
    if (!(tr.rho > 0.0)) throw ParameterError("trust region: ellipse radius must be positive");
    try {
        cholesky_factor(tr.p);
    } catch (const Error&) {
        throw ParameterError("trust region: ellipse shape matrix must be SPD");
    }
}

/// The scalar the accept/reject loop multiplies by beta or gamma: the largest
/// box radius, or the ellipse radius rho.
inline double region_size(const TrustRegion& tr) {
    if (tr.kind == TrustRegion::Kind::box) {
        double worst = 0.0;
        for (double r : tr.radii) worst = std::max(worst, r);
        return worst;
    }
    return tr.rho;
}

inline void scale_region(TrustRegion& tr, double factor) {
    if (tr.kind == TrustRegion::Kind::box) {
        for (double& r : tr.radii) r *= factor;
        return;
    }
    tr.rho *= factor;
}

inline bool region_contains(const TrustRegion& tr, const Vector& x, double slack = 1e-10) {
    if (x.size() != tr.center.size()) return false;
    if (tr.kind == TrustRegion::Kind::box) {
        for (std::size_t j = 0; j < x.size(); ++j)
            if (std::fabs(x[j] - tr.center[j]) > tr.radii[j] + slack) return false;
        return true;
    }
    Matrix l = cholesky_factor(tr.p);
    Vector d = sub(x, tr.center);
    Vector z = cholesky_solve(l, d);
    return dot(d, z) <= tr.rho + slack;
}

enum class ConvexifyMode { affine, quad_psd, quasilinear };

namespace detail {

/// P = Q max(Lambda, 0) Q', the nearest PSD matrix in Frobenius norm.
inline Matrix psd_project(const Matrix& h) {
    EigResult e = eig_sym(h);
    std::size_t n = h.rows;
    Matrix p(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        double lam = std::max(e.values[k], 0.0);
        if (lam == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) p(i, j) += lam * e.q(i, k) * e.q(j, k);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.5 * (p(i, j) + p(j, i));
            p(i, j) = s;
            p(j, i) = s;
        }
    return p;
}

inline Oracle affine_model(double fk, Vector gk, Vector xk) {
    Oracle o;
    std::size_t d = xk.size();
    o.value = [fk, gk, xk](const Vector& x) { return fk + dot(gk, sub(x, xk)); };
    o.gradient = [gk](const Vector&) { return gk; };
    o.hessian = [d](const Vector&) { return Matrix(d, d); };
    return o;
}

}  // namespace detail

/// Convex model of `oracle` anchored at x_k.  `affine` is the tangent plane,
/// `quad_psd` adds the curvature term with negative Hessian eigenvalues
/// clipped to zero, and `quasilinear` freezes the matrix part of the
/// quadratic expansion f = A(x) x + c(x) at x_k, leaving an affine model with
/// slope grad - 0.5 H x_k.
inline Oracle convexify(const Oracle& oracle, const Vector& x_k, ConvexifyMode mode) {
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("convexify: oracle must provide value and gradient");
    double fk = oracle.value(x_k);
    Vector gk = oracle.gradient(x_k);
    if (mode == ConvexifyMode::affine) return detail::affine_model(fk, gk, x_k);
    if (!oracle.hessian)
        throw CapabilityError("convexify: quadratic and quasi-linear models need a Hessian");
    Matrix h = oracle.hessian(x_k);
    if (mode == ConvexifyMode::quad_psd) {
        Matrix p = detail::psd_project(h);
        Vector xk = x_k;
        Oracle o;
        o.value = [fk, gk, p, xk](const Vector& x) {
            Vector d = sub(x, xk);
            return fk + dot(gk, d) + 0.5 * dot(d, matvec(p, d));
        };
        o.gradient = [gk, p, xk](const Vector& x) {
            Vector g = matvec(p, sub(x, xk));
            axpy(1.0, gk, g);
            return g;
        };
        o.hessian = [p](const Vector&) { return p; };
        return o;
    }
    // quasilinear: f ~ 0.5 x' H x + b' x + a around x_k, frozen as
    // (0.5 H x_k + b)' x + a
    Vector slope = gk;
    axpy(-0.5, matvec(h, x_k), slope);
    double intercept = fk - dot(gk, x_k) + 0.5 * dot(x_k, matvec(h, x_k));
    std::size_t d = x_k.size();
    Oracle o;
    o.value = [slope, intercept](const Vector& x) { return intercept + dot(slope, x); };
    o.gradient = [slope](const Vector&) { return slope; };
    o.hessian = [d](const Vector&) { return Matrix(d, d); };
    return o;
}

/// phi(x) = f(x) + lambda (sum_i max(y_i(x), 0)^2 + ||A x - b||^2), the merit
/// that equals f on the feasible set and exceeds it elsewhere.
inline double exact_penalty(const Problem& problem, const Vector& x, double lambda_pen) {
    double phi = problem.oracle.value(x);
    if (lambda_pen == 0.0) return phi;
    double viol = 0.0;
    for (const Oracle& yi : problem.ineq_constraints) {
        double v = std::max(yi.value(x), 0.0);
        viol += v * v;
    }
    if (problem.eq) {
        Vector r = sub(matvec(problem.eq->A, x), problem.eq->b);
        viol += dot(r, r);
    }
    return phi + lambda_pen * viol;
}

struct ScpConfig {
    double alpha = 0.1;
    double beta = 1.1;
    double gamma = 0.5;
    double lambda_pen = 100.0;
    StopRule stop;
    /// Model family; unset picks quad_psd when the oracle has a Hessian and
    /// the tangent model otherwise.
    std::optional<ConvexifyMode> mode;
};

inline void validate_scp_config(const ScpConfig& config) {
    if (!(config.alpha > 0.0) || !(config.alpha < 1.0))
        throw ParameterError("scp: alpha must lie in (0, 1)");
    if (!(config.beta >= 1.0)) throw ParameterError("scp: beta must be at least 1");
    if (!(config.gamma > 0.0) || !(config.gamma < 1.0))
        throw ParameterError("scp: gamma must lie in (0, 1)");
    if (!(config.lambda_pen >= 0.0)) throw ParameterError("scp: lambda_pen must be nonnegative");
    if (!config.stop.any_enabled())
        throw ParameterError("scp: stop rule must enable at least one criterion");
}

/// Minimizes a convex surrogate over the trust region from the given start
/// and returns the subproblem solution.
using ScpInner =
    std::function<Vector(const Oracle& surrogate, const TrustRegion& region, const Vector& x0)>;

namespace detail {

inline Vector solve_box_subproblem(const Oracle& surrogate, const TrustRegion& tr,
                                   const Vector& x0) {
    Vector lo = tr.center;
    Vector hi = tr.center;
    for (std::size_t j = 0; j < lo.size(); ++j) {
        lo[j] -= tr.radii[j];
        hi[j] += tr.radii[j];
    }
    Problem sub;
    sub.d = x0.size();
    sub.oracle = surrogate;
    StopRule stop;
    stop.grad_tol = 1e-10;
    stop.max_iters = 4000;
    Vector start = project(SetSpec::box(lo, hi), x0);
    try {
        Report rep = projected_gradient(sub, SetSpec::box(lo, hi), start, armijo_step(1.0), stop);
        return rep.x;
    } catch (const Error&) {
        // the line search has no descent direction: the start is already the
        // subproblem solution, which the outer loop reads as zero predicted
        // decrease
        return start;
    }
}

inline Vector solve_ellipse_subproblem(const Oracle& surrogate, const TrustRegion& tr,
                                       const Vector& x0) {
    std::size_t d = tr.center.size();
    Matrix l = cholesky_factor(tr.p);
    Matrix pinv(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        Vector e(d, 0.0);
        e[j] = 1.0;
        Vector col = cholesky_solve(l, e);
        for (std::size_t i = 0; i < d; ++i) pinv(i, j) = col[i];
    }
    Vector c = tr.center;
    double rho = tr.rho;
    Oracle membership;
    membership.value = [pinv, c, rho](const Vector& x) {
        Vector dv = sub(x, c);
        return dot(dv, matvec(pinv, dv)) - rho;
    };
    membership.gradient = [pinv, c](const Vector& x) {
        return scaled(2.0, matvec(pinv, sub(x, c)));
    };
    membership.hessian = [pinv](const Vector&) {
        Matrix h = pinv;
        for (double& v : h.a) v *= 2.0;
        return h;
    };

    Problem sub;
    sub.d = d;
    sub.oracle = surrogate;
    sub.ineq_constraints = {membership};
    Vector start = region_contains(tr, x0, -1e-9 * (1.0 + rho)) ? x0 : c;
    BarrierConfig barrier;
    barrier.t0 = 1.0;
    barrier.mu_factor = 20.0;
    barrier.eps_gap = 1e-9;
    try {
        Report rep = interior_point(sub, barrier, start);
        return rep.x;
    } catch (const Error&) {
        return start;
    }
}

/// Surrogate merit: convex model of f plus the penalty built from the convex
/// models of the inequality constraints and the (already affine) equalities.
inline Oracle merit_model(Oracle fhat, std::vector<Oracle> yhats, std::optional<AffineEq> eq,
                          double lambda) {
    Oracle o;
    o.value = [fhat, yhats, eq, lambda](const Vector& x) {
        double v = fhat.value(x);
        if (lambda == 0.0) return v;
        for (const Oracle& yh : yhats) {
            double t = std::max(yh.value(x), 0.0);
            v += lambda * t * t;
        }
        if (eq) {
            Vector r = sub(matvec(eq->A, x), eq->b);
            v += lambda * dot(r, r);
        }
        return v;
    };
    o.gradient = [fhat, yhats, eq, lambda](const Vector& x) {
        Vector g = fhat.gradient(x);
        if (lambda == 0.0) return g;
        for (const Oracle& yh : yhats) {
            double t = yh.value(x);
            if (t > 0.0) axpy(2.0 * lambda * t, yh.gradient(x), g);
        }
        if (eq) {
            Vector r = sub(matvec(eq->A, x), eq->b);
            axpy(2.0 * lambda, tmatvec(eq->A, r), g);
        }
        return g;
    };
    o.hessian = [fhat, yhats, eq, lambda](const Vector& x) {
        Matrix h = fhat.hessian(x);
        if (lambda == 0.0) return h;
        for (const Oracle& yh : yhats) {
            double t = yh.value(x);
            if (t <= 0.0) continue;
            Vector gy = yh.gradient(x);
            Matrix hy = yh.hessian(x);
            for (std::size_t i = 0; i < h.rows; ++i)
                for (std::size_t j = 0; j < h.cols; ++j)
                    h(i, j) += 2.0 * lambda * (gy[i] * gy[j] + t * hy(i, j));
        }
        if (eq) {
            Matrix ata = matmul(transpose(eq->A), eq->A);
            for (std::size_t i = 0; i < h.a.size(); ++i) h.a[i] += 2.0 * lambda * ata.a[i];
        }
        return h;
    };
    return o;
}

inline double constraint_violation(const Problem& problem, const Vector& x) {
    double viol = 0.0;
    for (const Oracle& yi : problem.ineq_constraints) {
        double v = std::max(yi.value(x), 0.0);
        viol += v * v;
    }
    if (problem.eq) {
        Vector r = sub(matvec(problem.eq->A, x), problem.eq->b);
        viol += dot(r, r);
    }
    return viol;
}

}  // namespace detail

/// Solves the convexified trust-region subproblem with projected gradient on
/// box regions and the interior-point method on ellipse regions.
inline ScpInner scp_default_inner() {
    return [](const Oracle& surrogate, const TrustRegion& tr, const Vector& x0) {
        if (tr.kind == TrustRegion::Kind::box)
            return detail::solve_box_subproblem(surrogate, tr, x0);
        return detail::solve_ellipse_subproblem(surrogate, tr, x0);
    };
}

/// Accept/reject trust-region loop on the exact penalty merit.  Each pass
/// minimizes the convexified merit over the region around x, accepts the
/// candidate iff the realized decrease covers an alpha fraction of the
/// predicted one, and rescales the region by beta (accept) or gamma
/// (reject).  A region shrunk below 1e-12 terminates as converged.  The
/// penalty weight doubles when the constraint violation stalls.
///
/// Trace: f and gnorm are the merit and its gradient norm at the current
/// penalty weight (plain f and its gradient when unconstrained); extras
/// carry phi, region, accepted, pred_decrease, and lambda.
inline Report scp_solve(const Problem& problem, const ScpConfig& config, TrustRegion region0,
                        const Vector& x0, const ScpInner& inner_solver = {}) {
    validate_scp_config(config);
    if (!problem.oracle.value || !problem.oracle.gradient)
        throw CapabilityError("scp_solve: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("scp_solve: x0 must be finite");
    region0.center = x0;
    validate_trust_region(region0);

    ConvexifyMode mode = config.mode
                             ? *config.mode
                             : (problem.oracle.hessian ? ConvexifyMode::quad_psd
                                                       : ConvexifyMode::affine);
    bool needs_hessian = mode != ConvexifyMode::affine;
    if (needs_hessian && !problem.oracle.hessian)
        throw CapabilityError("scp_solve: the requested model needs a Hessian");
    for (const Oracle& yi : problem.ineq_constraints) {
        if (!yi.value || !yi.gradient)
            throw CapabilityError("scp_solve: constraints must provide value and gradient");
        if (needs_hessian && !yi.hessian)
            throw CapabilityError("scp_solve: the requested model needs constraint Hessians");
    }

    ScpInner inner = inner_solver ? inner_solver : scp_default_inner();
    bool constrained = problem.m1() > 0 || problem.eq.has_value();

    Report rep;
    Vector x = x0;
    TrustRegion tr = region0;
    double lambda = config.lambda_pen;
    double initial_size = region_size(region0);
    double last_step = 0.0;
    double last_accept = 1.0;
    double last_pred = 0.0;
    double best_viol = detail::constraint_violation(problem, x);
    int stall = 0;
    long long accepts = 0;
    long long rejects = 0;

    for (long long k = 0;; ++k) {
        double phi = exact_penalty(problem, x, lambda);
        Vector merit_grad = problem.oracle.gradient(x);
        if (constrained) {
            for (const Oracle& yi : problem.ineq_constraints) {
                double t = yi.value(x);
                if (t > 0.0) axpy(2.0 * lambda * t, yi.gradient(x), merit_grad);
            }
            if (problem.eq) {
                Vector r = sub(matvec(problem.eq->A, x), problem.eq->b);
                axpy(2.0 * lambda, tmatvec(problem.eq->A, r), merit_grad);
            }
        }

        TraceRecord rec;
        rec.k = k;
        rec.f = phi;
        rec.gnorm = norm(merit_grad, Norm::l2);
        rec.step = last_step;
        rec.extras["phi"] = phi;
        rec.extras["region"] = region_size(tr);
        rec.extras["accepted"] = last_accept;
        rec.extras["pred_decrease"] = last_pred;
        rec.extras["lambda"] = lambda;
        if (!std::isfinite(phi) || !all_finite(x)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        StopReason why = push_trace(rep, config.stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (region_size(tr) < 1e-12) {
            rep.status = Status::converged;
            rep.stats["region_floor"] = 1.0;
            break;
        }

        tr.center = x;
        Vector xhat;
        double phihat_at_xhat = 0.0;
        try {
            Oracle fhat = convexify(problem.oracle, x, mode);
            std::vector<Oracle> yhats;
            yhats.reserve(problem.ineq_constraints.size());
            for (const Oracle& yi : problem.ineq_constraints)
                yhats.push_back(convexify(yi, x, mode));
            Oracle phihat = detail::merit_model(std::move(fhat), std::move(yhats), problem.eq,
                                                constrained ? lambda : 0.0);
            xhat = inner(phihat, tr, x);
            if (xhat.size() != x.size() || !all_finite(xhat))
                throw EvaluationError("scp_solve: inner solver returned an unusable point");
            phihat_at_xhat = phihat.value(xhat);
        } catch (const Error&) {
            rep.status = Status::aborted;
            rep.stats["aborted_at_k"] = static_cast<double>(k);
            break;
        }

        double pred = phi - phihat_at_xhat;
        double exact = phi - exact_penalty(problem, xhat, lambda);
        last_pred = pred;
        if (pred > 0.0 && config.alpha * pred <= exact) {
            last_step = norm(sub(xhat, x), Norm::l2);
            last_accept = 1.0;
            x = xhat;
            scale_region(tr, config.beta);
            ++accepts;
        } else {
            last_step = 0.0;
            last_accept = 0.0;
            scale_region(tr, config.gamma);
            ++rejects;
        }

        if (constrained) {
            double viol = detail::constraint_violation(problem, x);
            if (viol < 0.99 * best_viol) {
                best_viol = viol;
                stall = 0;
            } else if (viol > 1e-12) {
                if (++stall >= 5 && lambda < 1e12) {
                    lambda = std::min(2.0 * lambda, 1e12);
                    stall = 0;
                    double factor = initial_size / region_size(tr);
                    scale_region(tr, factor);
                }
            }
        }
    }

    rep.x = x;
    rep.stats["region_final"] = region_size(tr);
    rep.stats["lambda_final"] = lambda;
    rep.stats["accepts"] = static_cast<double>(accepts);
    rep.stats["rejects"] = static_cast<double>(rejects);
    return rep;
}

}  // namespace descentforge
