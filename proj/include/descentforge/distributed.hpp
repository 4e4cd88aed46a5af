#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "linesearch.hpp"
#include "linsolve.hpp"
#include "proximal.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// multi-block problem description
// ---------------------------------------------------------------------------

/// One variable of a multi-block problem: its local objective, an optional
/// feasible set, and optional scalar constraint oracles y (y(x) <= 0) and
/// h (h(x) = 0).
struct Block {
    Oracle oracle;
    std::optional<SetSpec> set;
    std::optional<Oracle> ineq;
    std::optional<Oracle> eq;
};

/// How the blocks are linked: an affine two-block constraint A x1 + B x2 = c,
/// fully separable per-block constraints, or copies of one shared variable.
enum class Coupling { two_block, general, consensus };

struct TwoBlockLink {
    Matrix a;
    Matrix b;
    Vector c;
};

struct BlockProblem {
    std::vector<Block> blocks;
    Coupling coupling = Coupling::general;
    std::optional<TwoBlockLink> link;  // two_block only
    std::optional<Oracle> joint;       // objective over the concatenated vector
                                       // when it does not decompose per block
};

/// Iterate of the operator-splitting solvers.  u stores the scaled dual
/// nu / rho; the residual histories grow by one entry per completed pass.
struct AdmmState {
    std::vector<Vector> x_blocks;
    Vector z;
    std::vector<Vector> z_blocks;
    std::vector<Vector> u;
    double rho = 1.0;
    std::vector<double> primal_residuals;
    std::vector<double> dual_residuals;
};

inline void validate_admm_state(const AdmmState& st) {
    if (!(st.rho > 0.0)) throw ParameterError("AdmmState: rho must be positive");
    if (st.primal_residuals.size() != st.dual_residuals.size())
        throw ParameterError("AdmmState: residual histories must have equal length");
}

/// How a block subproblem is minimized: a closed-form proximal step, Newton
/// iterations to high accuracy, or a fixed budget of backtracking gradient
/// steps.
struct InnerSolve {
    enum class Mode { prox, exact, gd };
    Mode mode = Mode::gd;
    int gd_steps = 5;
};

inline InnerSolve prox_inner() { return {InnerSolve::Mode::prox, 0}; }
inline InnerSolve exact_inner() { return {InnerSolve::Mode::exact, 0}; }
inline InnerSolve gd_inner(int steps = 5) {
    if (steps < 1) throw ParameterError("gd_inner: steps must be >= 1");
    return {InnerSolve::Mode::gd, steps};
}

// ---------------------------------------------------------------------------
// inequality-to-equality conversion
// ---------------------------------------------------------------------------

/// (max(0, y(x)))^2: squares the violated part of y(x) <= 0 so the constraint
/// can be handled as an equality.  Zero with zero gradient on the feasible
/// side, so the conversion is continuously differentiable.
inline double hinge_sq_value(const Oracle& y, const Vector& x) {
    if (!y.value) throw CapabilityError("hinge_sq_value: constraint oracle lacks value");
    double h = std::max(0.0, y.value(x));
    return h * h;
}

inline Vector hinge_sq_gradient(const Oracle& y, const Vector& x) {
    if (!y.value || !y.gradient)
        throw CapabilityError("hinge_sq_gradient: constraint oracle lacks value or gradient");
    double h = std::max(0.0, y.value(x));
    if (h == 0.0) return Vector(x.size(), 0.0);
    return scaled(2.0 * h, y.gradient(x));
}

inline Matrix hinge_sq_hessian(const Oracle& y, const Vector& x) {
    if (!y.value || !y.gradient || !y.hessian)
        throw CapabilityError("hinge_sq_hessian: constraint oracle lacks value, gradient, or hessian");
    double h = std::max(0.0, y.value(x));
    Matrix out(x.size(), x.size());
    if (h == 0.0) return out;
    Vector g = y.gradient(x);
    Matrix hy = y.hessian(x);
    if (hy.rows != x.size() || hy.cols != x.size())
        throw DimensionError("hinge_sq_hessian: constraint hessian shape mismatch");
    Matrix gg = outer(g, g);
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] = 2.0 * h * hy.a[i] + 2.0 * gg.a[i];
    return out;
}

namespace detail {

inline void add_in_place(Matrix& m, double c, const Matrix& other) {
    if (m.rows != other.rows || m.cols != other.cols)
        throw DimensionError("add_in_place: shape mismatch");
    for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] += c * other.a[i];
}

inline std::vector<std::size_t> block_offsets(const std::vector<Vector>& xs) {
    std::vector<std::size_t> offs(xs.size() + 1, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) offs[i + 1] = offs[i] + xs[i].size();
    return offs;
}

inline Vector concat_blocks(const std::vector<Vector>& xs) {
    Vector out;
    for (const Vector& x : xs) out.insert(out.end(), x.begin(), x.end());
    return out;
}

/// Validates the per-block inner specs: either one spec broadcast to every
/// block or exactly one per block.
inline const InnerSolve& block_inner(const std::vector<InnerSolve>& inner, std::size_t i) {
    return inner.size() == 1 ? inner.front() : inner[i];
}

inline void require_inner_shape(const std::vector<InnerSolve>& inner, std::size_t m,
                                const char* who) {
    if (inner.size() != 1 && inner.size() != m)
        throw ParameterError(std::string(who) + ": give one inner spec or one per block");
}

/// True when the residual history shows sustained growth: the newest value
/// exceeds ten times the value 100 iterations back and has left the starting
/// level.
inline bool residual_blowup(const std::vector<double>& r) {
    if (r.size() < 101) return false;
    double now = r.back();
    double then = r[r.size() - 101];
    return then > 0.0 && now > 10.0 * then && now > std::max(r.front(), 1e-12);
}

/// A fixed budget of backtracking gradient steps; with a feasible set the
/// trial point is projected before the decrease test.
inline Vector gd_inner_run(const Oracle& o, Vector x, int steps, const SetSpec* set = nullptr) {
    for (int t = 0; t < steps; ++t) {
        Vector g = o.gradient(x);
        if (!all_finite(g)) throw EvaluationError("gd inner: non-finite gradient");
        if (norm(g, Norm::l2) <= 1e-14) break;
        if (set) {
            double fx = o.value(x);
            double eta = 1.0;
            Vector trial;
            double ft = 0.0;
            for (int h = 0;; ++h) {
                trial = x;
                axpy(-eta, g, trial);
                trial = project(*set, trial);
                ft = o.value(trial);
                if (ft <= fx || h >= 60) break;
                eta *= 0.5;
            }
            if (!(ft <= fx)) break;
            x = trial;
        } else {
            Vector p = scaled(-1.0, g);
            double eta = armijo_backtracking(o, x, p, 1.0).eta;
            axpy(eta, p, x);
        }
    }
    return x;
}

/// Newton iterations with a halving safeguard until the gradient is tiny; a
/// single undamped step is exact on quadratics.  Falls back to steepest
/// descent when the Hessian solve fails or gives an ascent direction.
inline Vector newton_inner_run(const Oracle& o, Vector x, int max_steps = 50,
                               double tol = 1e-12) {
    if (!o.hessian) throw CapabilityError("exact inner solve requires a Hessian oracle");
    for (int t = 0; t < max_steps; ++t) {
        Vector g = o.gradient(x);
        if (!all_finite(g)) throw EvaluationError("newton inner: non-finite gradient");
        if (norm(g, Norm::l2) <= tol) break;
        Vector p;
        try {
            p = solve_linear(o.hessian(x), scaled(-1.0, g));
        } catch (const Error&) {
            p = scaled(-1.0, g);
        }
        if (!all_finite(p) || dot(p, g) >= 0.0) p = scaled(-1.0, g);
        double fx = o.value(x);
        double eta = 1.0;
        Vector trial = x;
        axpy(eta, p, trial);
        double ft = o.value(trial);
        int halvings = 0;
        while (!(ft <= fx) && halvings++ < 60) {
            eta *= 0.5;
            trial = x;
            axpy(eta, p, trial);
            ft = o.value(trial);
        }
        if (!(ft <= fx)) break;
        x = trial;
    }
    return x;
}

/// f(x) + nu'(Ax - b), the plain Lagrangian along x for a fixed dual.
inline Oracle lagrangian_oracle(const Oracle& f, const Matrix& a, const Vector& b, Vector nu) {
    Oracle o;
    o.value = [&f, &a, &b, nu](const Vector& x) {
        return f.value(x) + dot(nu, sub(matvec(a, x), b));
    };
    o.gradient = [&f, &a, nu](const Vector& x) {
        Vector g = f.gradient(x);
        axpy(1.0, tmatvec(a, nu), g);
        return g;
    };
    if (f.hessian) o.hessian = [&f](const Vector& x) { return f.hessian(x); };
    return o;
}

/// f(x) + nu'(Ax - b) + (rho/2)||Ax - b||^2, the penalized Lagrangian.
inline Oracle augmented_oracle(const Oracle& f, const Matrix& a, const Vector& b, Vector nu,
                               double rho) {
    Oracle o;
    o.value = [&f, &a, &b, nu, rho](const Vector& x) {
        Vector r = sub(matvec(a, x), b);
        return f.value(x) + dot(nu, r) + 0.5 * rho * dot(r, r);
    };
    o.gradient = [&f, &a, &b, nu, rho](const Vector& x) {
        Vector g = f.gradient(x);
        Vector r = sub(matvec(a, x), b);
        Vector mult = nu;
        axpy(rho, r, mult);
        axpy(1.0, tmatvec(a, mult), g);
        return g;
    };
    if (f.hessian) {
        Matrix ata = matmul(transpose(a), a);
        o.hessian = [&f, ata, rho](const Vector& x) {
            Matrix h = f.hessian(x);
            add_in_place(h, rho, ata);
            return h;
        };
    }
    return o;
}

/// f(v) + (rho/2)||Mv + w||^2 for a frozen offset w.
inline Oracle penalized_block_oracle(const Oracle& f, const Matrix& m, Vector w, double rho) {
    Oracle o;
    o.value = [&f, &m, w, rho](const Vector& v) {
        Vector r = matvec(m, v);
        axpy(1.0, w, r);
        return f.value(v) + 0.5 * rho * dot(r, r);
    };
    o.gradient = [&f, &m, w, rho](const Vector& v) {
        Vector g = f.gradient(v);
        Vector r = matvec(m, v);
        axpy(1.0, w, r);
        axpy(rho, tmatvec(m, r), g);
        return g;
    };
    if (f.hessian) {
        Matrix mtm = matmul(transpose(m), m);
        o.hessian = [&f, mtm, rho](const Vector& v) {
            Matrix h = f.hessian(v);
            add_in_place(h, rho, mtm);
            return h;
        };
    }
    return o;
}

inline bool is_identity(const Matrix& m) {
    if (m.rows != m.cols) return false;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            if (m(i, j) != (i == j ? 1.0 : 0.0)) return false;
    return true;
}

inline bool is_neg_identity(const Matrix& m) {
    if (m.rows != m.cols) return false;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            if (m(i, j) != (i == j ? -1.0 : 0.0)) return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// alternating minimization
// ---------------------------------------------------------------------------

/// Cyclic block minimization: one pass updates every block in order, each
/// update seeing the blocks before it at their new values and the blocks
/// after it at their old ones.  With proximal_lambda set, each block
/// subproblem gains (1/(2 lambda))||v - v_old||^2 to keep updates close.
/// Exact inner solves make the objective non-increasing pass over pass.
inline Report alternating_minimize(const BlockProblem& bp, const std::vector<InnerSolve>& inner,
                                   std::optional<double> proximal_lambda, const StopRule& stop,
                                   const std::vector<Vector>& x0s) {
    const std::size_t m = bp.blocks.size();
    if (m == 0) throw ParameterError("alternating_minimize: no blocks");
    if (bp.coupling != Coupling::general)
        throw InvalidKindError("alternating_minimize: blocks must use general coupling");
    if (x0s.size() != m) throw DimensionError("alternating_minimize: one start per block required");
    detail::require_inner_shape(inner, m, "alternating_minimize");
    if (!stop.any_enabled())
        throw ParameterError("alternating_minimize: stop rule must enable at least one criterion");
    if (proximal_lambda && !(*proximal_lambda > 0.0))
        throw ParameterError("alternating_minimize: proximal_lambda must be positive");
    const bool joint = bp.joint.has_value();
    if (joint && (!bp.joint->value || !bp.joint->gradient))
        throw CapabilityError("alternating_minimize: joint oracle must provide value and gradient");
    for (std::size_t i = 0; i < m; ++i) {
        if (!all_finite(x0s[i]))
            throw ParameterError("alternating_minimize: x0 must be finite");
        if (!joint && (!bp.blocks[i].oracle.value || !bp.blocks[i].oracle.gradient))
            throw CapabilityError("alternating_minimize: block oracle must provide value and gradient");
        if (detail::block_inner(inner, i).mode == InnerSolve::Mode::prox)
            throw CapabilityError("alternating_minimize: prox inner mode is not available");
        if (detail::block_inner(inner, i).mode == InnerSolve::Mode::exact && bp.blocks[i].set)
            throw CapabilityError(
                "alternating_minimize: exact inner with a feasible set is not available; use gd");
    }

    std::vector<Vector> xs = x0s;
    std::vector<std::size_t> offs = detail::block_offsets(xs);
    Vector xcat = detail::concat_blocks(xs);

    auto joint_value = [&]() {
        if (joint) return bp.joint->value(xcat);
        double f = 0.0;
        for (std::size_t i = 0; i < m; ++i) f += bp.blocks[i].oracle.value(xs[i]);
        return f;
    };
    auto joint_gnorm = [&]() {
        if (joint) return norm(bp.joint->gradient(xcat), Norm::l2);
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double gi = norm(bp.blocks[i].oracle.gradient(xs[i]), Norm::l2);
            sq += gi * gi;
        }
        return std::sqrt(sq);
    };
    // objective along block i with the other blocks frozen at xcat
    auto block_view = [&](std::size_t i) {
        Oracle o;
        std::size_t off = offs[i];
        std::size_t len = xs[i].size();
        if (joint) {
            const Oracle& jo = *bp.joint;
            o.value = [&jo, &xcat, off](const Vector& v) {
                Vector full = xcat;
                std::copy(v.begin(), v.end(), full.begin() + static_cast<std::ptrdiff_t>(off));
                return jo.value(full);
            };
            o.gradient = [&jo, &xcat, off, len](const Vector& v) {
                Vector full = xcat;
                std::copy(v.begin(), v.end(), full.begin() + static_cast<std::ptrdiff_t>(off));
                Vector g = jo.gradient(full);
                return Vector(g.begin() + static_cast<std::ptrdiff_t>(off),
                              g.begin() + static_cast<std::ptrdiff_t>(off + len));
            };
            if (jo.hessian)
                o.hessian = [&jo, &xcat, off, len](const Vector& v) {
                    Vector full = xcat;
                    std::copy(v.begin(), v.end(), full.begin() + static_cast<std::ptrdiff_t>(off));
                    Matrix h = jo.hessian(full);
                    Matrix sub_h(len, len);
                    for (std::size_t r = 0; r < len; ++r)
                        for (std::size_t c = 0; c < len; ++c) sub_h(r, c) = h(off + r, off + c);
                    return sub_h;
                };
        } else {
            o = bp.blocks[i].oracle;
        }
        return o;
    };
    auto with_prox_term = [&](Oracle base, Vector center, double lambda) {
        Oracle o;
        o.value = [base, center, lambda](const Vector& v) {
            Vector d = sub(v, center);
            return base.value(v) + 0.5 / lambda * dot(d, d);
        };
        o.gradient = [base, center, lambda](const Vector& v) {
            Vector g = base.gradient(v);
            axpy(1.0 / lambda, sub(v, center), g);
            return g;
        };
        if (base.hessian)
            o.hessian = [base, lambda](const Vector& v) {
                Matrix h = base.hessian(v);
                for (std::size_t i = 0; i < h.rows; ++i) h(i, i) += 1.0 / lambda;
                return h;
            };
        return o;
    };

    Report rep;
    Vector prev_cat = xcat;
    double pass_dx = 0.0;
    for (long long k = 0;; ++k) {
        double f = joint_value();
        double gn = joint_gnorm();
        if (!std::isfinite(f) || !std::isfinite(gn) || !all_finite(xcat)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            xcat = prev_cat;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = gn;
        rec.step = pass_dx;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_cat = xcat;
        bool aborted = false;
        for (std::size_t i = 0; i < m && !aborted; ++i) {
            const InnerSolve& spec = detail::block_inner(inner, i);
            Oracle view = block_view(i);
            if (proximal_lambda) view = with_prox_term(view, xs[i], *proximal_lambda);
            try {
                Vector next = spec.mode == InnerSolve::Mode::exact
                                  ? detail::newton_inner_run(view, xs[i])
                                  : detail::gd_inner_run(view, xs[i], spec.gd_steps,
                                                         bp.blocks[i].set ? &*bp.blocks[i].set
                                                                          : nullptr);
                xs[i] = next;
                std::copy(next.begin(), next.end(),
                          xcat.begin() + static_cast<std::ptrdiff_t>(offs[i]));
            } catch (const Error&) {
                rep.status = Status::aborted;
                rep.stats["aborted_block"] = static_cast<double>(i);
                aborted = true;
            }
        }
        if (aborted) break;
        pass_dx = norm(sub(xcat, prev_cat), Norm::l2);
    }
    rep.x = xcat;
    for (std::size_t i = 0; i < m; ++i) rep.aux["x_" + std::to_string(i)] = xs[i];
    return rep;
}

// ---------------------------------------------------------------------------
// dual ascent
// ---------------------------------------------------------------------------

/// Gradient ascent on the dual of min f(x) s.t. Ax = b: the x-update
/// minimizes the Lagrangian at the current dual, then nu moves along the
/// constraint residual, whose norm is the dual gradient norm and drives the
/// stop rule.  Sustained residual growth reports divergence.
inline Report dual_ascent(const Problem& problem, StepSchedule eta_rule, double eta0,
                          const InnerSolve& inner, const StopRule& stop, const Vector& x0,
                          const Vector& nu0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("dual_ascent: oracle must provide value and gradient");
    if (!problem.eq) throw ParameterError("dual_ascent: problem lacks the equality coupling (A, b)");
    if (inner.mode == InnerSolve::Mode::prox)
        throw CapabilityError("dual_ascent: prox inner mode is not available; use exact or gd");
    if (!(eta0 > 0.0)) throw ParameterError("dual_ascent: eta0 must be positive");
    if (!stop.any_enabled())
        throw ParameterError("dual_ascent: stop rule must enable at least one criterion");
    if (!all_finite(x0) || !all_finite(nu0))
        throw ParameterError("dual_ascent: x0 and nu0 must be finite");
    const Matrix& a = problem.eq->A;
    const Vector& b = problem.eq->b;
    if (a.cols != x0.size()) throw DimensionError("dual_ascent: cols(A) != dim(x0)");
    if (a.rows != nu0.size() || a.rows != b.size())
        throw DimensionError("dual_ascent: rows(A) must match dim(nu0) and dim(b)");

    Report rep;
    Vector x = x0;
    Vector nu = nu0;
    Vector prev_x = x0;
    std::vector<double> r_hist;
    double step = 0.0;
    // min-norm restoration onto Ax = b feeds the f_feas extra
    bool can_restore = true;
    Matrix aat_l;
    try {
        aat_l = cholesky_factor(matmul(a, transpose(a)));
    } catch (const Error&) {
        can_restore = false;
    }

    for (long long k = 0;; ++k) {
        Vector r = sub(matvec(a, x), b);
        double f = oracle.value(x);
        double rn = norm(r, Norm::l2);
        if (!std::isfinite(f) || !all_finite(x) || !all_finite(nu)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = rn;
        rec.step = step;
        rec.extras["r_norm"] = rn;
        rec.extras["nu_norm"] = norm(nu, Norm::l2);
        if (can_restore) {
            Vector xf = x;
            axpy(-1.0, tmatvec(a, cholesky_solve(aat_l, r)), xf);
            rec.extras["f_feas"] = oracle.value(xf);
        }
        Vector x_next;
        bool have_next = false;
        if (inner.mode == InnerSolve::Mode::exact) {
            Oracle lag = detail::lagrangian_oracle(oracle, a, b, nu);
            x_next = detail::newton_inner_run(lag, x);
            rec.extras["dual_value"] = lag.value(x_next);
            have_next = true;
        }
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        prev_x = x;
        if (!have_next) {
            Oracle lag = detail::lagrangian_oracle(oracle, a, b, nu);
            x_next = detail::gd_inner_run(lag, x, inner.gd_steps);
        }
        x = x_next;
        double eta = schedule_eta(eta_rule, eta0, k + 1);
        axpy(eta, sub(matvec(a, x), b), nu);
        step = eta;
    }
    rep.x = x;
    rep.aux["nu"] = nu;
    return rep;
}

/// Dual decomposition: the same dual ascent on a separable objective
/// f1(x1) + f2(x2) with coupling A x1 + B x2 = c.  Each block minimizes its
/// own Lagrangian piece fi(xi) + nu'(Mi xi) against the frozen dual, so the
/// block updates are independent; the dual step is the synchronization point.
inline Report dual_ascent(const BlockProblem& bp, StepSchedule eta_rule, double eta0,
                          const InnerSolve& inner, const StopRule& stop,
                          const std::vector<Vector>& x0s, const Vector& nu0) {
    if (bp.coupling != Coupling::two_block || !bp.link)
        throw InvalidKindError("dual_ascent: block form needs two_block coupling with a link");
    if (bp.blocks.size() != 2 || x0s.size() != 2)
        throw DimensionError("dual_ascent: two blocks and two starts required");
    if (inner.mode == InnerSolve::Mode::prox)
        throw CapabilityError("dual_ascent: prox inner mode is not available; use exact or gd");
    if (!(eta0 > 0.0)) throw ParameterError("dual_ascent: eta0 must be positive");
    if (!stop.any_enabled())
        throw ParameterError("dual_ascent: stop rule must enable at least one criterion");
    const TwoBlockLink& link = *bp.link;
    const Matrix* ms[2] = {&link.a, &link.b};
    for (std::size_t i = 0; i < 2; ++i) {
        const Oracle& o = bp.blocks[i].oracle;
        if (!o.value || !o.gradient)
            throw CapabilityError("dual_ascent: block oracle must provide value and gradient");
        if (!all_finite(x0s[i])) throw ParameterError("dual_ascent: x0 must be finite");
        if (ms[i]->cols != x0s[i].size())
            throw DimensionError("dual_ascent: coupling columns must match the block dimension");
    }
    if (link.a.rows != link.b.rows || link.a.rows != link.c.size() || link.a.rows != nu0.size())
        throw DimensionError("dual_ascent: coupling rows must match dim(c) and dim(nu0)");

    Report rep;
    std::vector<Vector> xs = x0s;
    Vector nu = nu0;
    std::vector<double> r_hist;
    double step = 0.0;
    const Vector zero_rhs(link.a.rows, 0.0);
    auto residual = [&]() {
        Vector r = matvec(link.a, xs[0]);
        axpy(1.0, matvec(link.b, xs[1]), r);
        axpy(-1.0, link.c, r);
        return r;
    };

    for (long long k = 0;; ++k) {
        Vector r = residual();
        double f = bp.blocks[0].oracle.value(xs[0]) + bp.blocks[1].oracle.value(xs[1]);
        double rn = norm(r, Norm::l2);
        if (!std::isfinite(f) || !all_finite(xs[0]) || !all_finite(xs[1]) || !all_finite(nu)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = rn;
        rec.step = step;
        rec.extras["r_norm"] = rn;
        rec.extras["nu_norm"] = norm(nu, Norm::l2);
        bool updated = false;
        std::vector<Vector> next = xs;
        if (inner.mode == InnerSolve::Mode::exact) {
            for (std::size_t i = 0; i < 2; ++i) {
                Oracle lag = detail::lagrangian_oracle(bp.blocks[i].oracle, *ms[i], zero_rhs, nu);
                next[i] = detail::newton_inner_run(lag, xs[i]);
            }
            double lval = bp.blocks[0].oracle.value(next[0]) + bp.blocks[1].oracle.value(next[1]);
            Vector rn_next = matvec(link.a, next[0]);
            axpy(1.0, matvec(link.b, next[1]), rn_next);
            axpy(-1.0, link.c, rn_next);
            rec.extras["dual_value"] = lval + dot(nu, rn_next);
            updated = true;
        }
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        if (!updated)
            for (std::size_t i = 0; i < 2; ++i) {
                Oracle lag = detail::lagrangian_oracle(bp.blocks[i].oracle, *ms[i], zero_rhs, nu);
                next[i] = detail::gd_inner_run(lag, xs[i], inner.gd_steps);
            }
        xs = next;
        double eta = schedule_eta(eta_rule, eta0, k + 1);
        axpy(eta, residual(), nu);
        step = eta;
    }
    rep.x = detail::concat_blocks(xs);
    rep.aux["x_0"] = xs[0];
    rep.aux["x_1"] = xs[1];
    rep.aux["nu"] = nu;
    return rep;
}

// ---------------------------------------------------------------------------
// method of multipliers
// ---------------------------------------------------------------------------

/// Dual ascent on the rho-penalized problem: the x-update minimizes
/// f(x) + nu'(Ax - b) + (rho/2)||Ax - b||^2 and the dual step size is
/// exactly rho.
inline Report method_of_multipliers(const Problem& problem, double rho, const InnerSolve& inner,
                                    const StopRule& stop, const Vector& x0, const Vector& nu0) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("method_of_multipliers: oracle must provide value and gradient");
    if (!problem.eq)
        throw ParameterError("method_of_multipliers: problem lacks the equality coupling (A, b)");
    if (!(rho > 0.0)) throw ParameterError("method_of_multipliers: rho must be positive");
    if (inner.mode == InnerSolve::Mode::prox)
        throw CapabilityError("method_of_multipliers: prox inner mode is not available");
    if (!stop.any_enabled())
        throw ParameterError("method_of_multipliers: stop rule must enable at least one criterion");
    if (!all_finite(x0) || !all_finite(nu0))
        throw ParameterError("method_of_multipliers: x0 and nu0 must be finite");
    const Matrix& a = problem.eq->A;
    const Vector& b = problem.eq->b;
    if (a.cols != x0.size()) throw DimensionError("method_of_multipliers: cols(A) != dim(x0)");
    if (a.rows != nu0.size() || a.rows != b.size())
        throw DimensionError("method_of_multipliers: rows(A) must match dim(nu0) and dim(b)");

    Report rep;
    Vector x = x0;
    Vector nu = nu0;
    Vector prev_x = x0;
    std::vector<double> r_hist;
    double step = 0.0;
    bool can_restore = true;
    Matrix aat_l;
    try {
        aat_l = cholesky_factor(matmul(a, transpose(a)));
    } catch (const Error&) {
        can_restore = false;
    }

    for (long long k = 0;; ++k) {
        Vector r = sub(matvec(a, x), b);
        double f = oracle.value(x);
        double rn = norm(r, Norm::l2);
        if (!std::isfinite(f) || !all_finite(x) || !all_finite(nu)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            x = prev_x;
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = rn;
        rec.step = step;
        rec.extras["r_norm"] = rn;
        rec.extras["nu_norm"] = norm(nu, Norm::l2);
        if (can_restore) {
            Vector xf = x;
            axpy(-1.0, tmatvec(a, cholesky_solve(aat_l, r)), xf);
            rec.extras["f_feas"] = oracle.value(xf);
        }
        if (inner.mode == InnerSolve::Mode::exact && oracle.hessian) {
            Oracle plain = detail::lagrangian_oracle(oracle, a, b, nu);
            Vector x_plain = detail::newton_inner_run(plain, x);
            rec.extras["dual_value"] = plain.value(x_plain);
        }
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        prev_x = x;
        Oracle aug = detail::augmented_oracle(oracle, a, b, nu, rho);
        x = inner.mode == InnerSolve::Mode::exact ? detail::newton_inner_run(aug, x)
                                                  : detail::gd_inner_run(aug, x, inner.gd_steps);
        axpy(rho, sub(matvec(a, x), b), nu);
        step = rho;
    }
    rep.x = x;
    rep.aux["nu"] = nu;
    rep.stats["rho"] = rho;
    return rep;
}

// ---------------------------------------------------------------------------
// two-block splitting
// ---------------------------------------------------------------------------

/// Splitting on min f1(x1) + f2(x2) s.t. A x1 + B x2 = c with the scaled dual
/// u = nu / rho.  One pass runs
///   x1 <- argmin f1 + (rho/2)||A x1 + B x2 - c + u||^2,
///   x2 <- the same with the fresh x1,
///   u  <- u + (A x1 + B x2 - c),
/// so the dual always moves last.  With scaled_form = false the iteration carries
/// nu itself and steps it by rho times the residual, which reproduces the
/// scaled x-iterates.  A prox inner needs its coupling matrix to be +-I.
inline Report admm_two_block(const BlockProblem& bp, double rho,
                             const std::vector<InnerSolve>& inner, const StopRule& stop,
                             std::vector<Vector> x0s = {}, Vector u0 = {}, bool scaled_form = true,
                             AdmmState* final_state = nullptr) {
    if (bp.coupling != Coupling::two_block || !bp.link)
        throw InvalidKindError("admm_two_block: two_block coupling with a link required");
    if (bp.blocks.size() != 2) throw DimensionError("admm_two_block: exactly two blocks required");
    if (!(rho > 0.0)) throw ParameterError("admm_two_block: rho must be positive");
    detail::require_inner_shape(inner, 2, "admm_two_block");
    if (!stop.any_enabled())
        throw ParameterError("admm_two_block: stop rule must enable at least one criterion");
    const TwoBlockLink& link = *bp.link;
    if (link.a.rows != link.b.rows || link.a.rows != link.c.size())
        throw DimensionError("admm_two_block: coupling rows must match dim(c)");
    if (x0s.empty()) x0s = {Vector(link.a.cols, 0.0), Vector(link.b.cols, 0.0)};
    if (x0s.size() != 2) throw DimensionError("admm_two_block: two starts required");
    if (u0.empty()) u0 = Vector(link.a.rows, 0.0);
    if (u0.size() != link.a.rows) throw DimensionError("admm_two_block: dim(u0) != coupling rows");
    const Matrix* ms[2] = {&link.a, &link.b};
    for (std::size_t i = 0; i < 2; ++i) {
        if (!bp.blocks[i].oracle.value)
            throw CapabilityError("admm_two_block: block oracle must provide value");
        if (!all_finite(x0s[i])) throw ParameterError("admm_two_block: x0 must be finite");
        if (ms[i]->cols != x0s[i].size())
            throw DimensionError("admm_two_block: coupling columns must match the block dimension");
        const InnerSolve& spec = detail::block_inner(inner, i);
        if (spec.mode == InnerSolve::Mode::prox) {
            if (!bp.blocks[i].oracle.prox)
                throw CapabilityError("admm_two_block: prox inner needs a prox oracle");
            if (!detail::is_identity(*ms[i]) && !detail::is_neg_identity(*ms[i]))
                throw CapabilityError("admm_two_block: prox inner needs an identity coupling");
        } else if (!bp.blocks[i].oracle.gradient) {
            throw CapabilityError("admm_two_block: gd and exact inners need a gradient oracle");
        }
    }
    if (!all_finite(u0)) throw ParameterError("admm_two_block: u0 must be finite");

    AdmmState st;
    st.x_blocks = x0s;
    st.rho = rho;
    st.u = {u0};
    Vector nu = scaled_form ? Vector() : scaled(rho, u0);

    Report rep;
    std::vector<double> r_hist;
    double s_norm = 0.0;
    double pass_step = 0.0;
    Matrix atb = matmul(transpose(link.a), link.b);
    auto residual = [&]() {
        Vector r = matvec(link.a, st.x_blocks[0]);
        axpy(1.0, matvec(link.b, st.x_blocks[1]), r);
        axpy(-1.0, link.c, r);
        return r;
    };
    auto u_eff = [&]() { return scaled_form ? st.u[0] : scaled(1.0 / rho, nu); };

    for (long long k = 0;; ++k) {
        Vector r = residual();
        double f = bp.blocks[0].oracle.value(st.x_blocks[0]) +
                   bp.blocks[1].oracle.value(st.x_blocks[1]);
        double rn = norm(r, Norm::l2);
        const Vector& dual = scaled_form ? st.u[0] : nu;
        if (!std::isfinite(f) || !all_finite(st.x_blocks[0]) || !all_finite(st.x_blocks[1]) ||
            !all_finite(dual)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        if (k > 0) rec.gnorm = std::max(rn, s_norm);
        rec.step = pass_step;
        rec.extras["r_norm"] = rn;
        rec.extras["s_norm"] = s_norm;
        rec.extras["nu_norm"] =
            scaled_form ? rho * norm(st.u[0], Norm::l2) : norm(nu, Norm::l2);
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        Vector x2_old = st.x_blocks[1];
        Vector prev_cat = detail::concat_blocks(st.x_blocks);
        bool failed = false;
        for (std::size_t i = 0; i < 2 && !failed; ++i) {
            // offset seen by block i: the other block's term minus c plus the dual
            Vector w = u_eff();
            axpy(-1.0, link.c, w);
            std::size_t other = 1 - i;
            axpy(1.0, matvec(*ms[other], st.x_blocks[other]), w);
            const InnerSolve& spec = detail::block_inner(inner, i);
            try {
                if (spec.mode == InnerSolve::Mode::prox) {
                    Vector v = detail::is_identity(*ms[i]) ? scaled(-1.0, w) : w;
                    st.x_blocks[i] = bp.blocks[i].oracle.prox(1.0 / rho, v);
                } else {
                    Oracle phi =
                        detail::penalized_block_oracle(bp.blocks[i].oracle, *ms[i], w, rho);
                    st.x_blocks[i] = spec.mode == InnerSolve::Mode::exact
                                         ? detail::newton_inner_run(phi, st.x_blocks[i])
                                         : detail::gd_inner_run(phi, st.x_blocks[i], spec.gd_steps);
                }
            } catch (const Error&) {
                rep.status = Status::aborted;
                rep.stats["aborted_block"] = static_cast<double>(i);
                failed = true;
            }
        }
        if (failed) break;
        Vector r_new = residual();
        if (scaled_form) {
            axpy(1.0, r_new, st.u[0]);
        } else {
            axpy(rho, r_new, nu);
        }
        Vector dz = sub(st.x_blocks[1], x2_old);
        s_norm = rho * norm(matvec(atb, dz), Norm::l2);
        st.primal_residuals.push_back(norm(r_new, Norm::l2));
        st.dual_residuals.push_back(s_norm);
        pass_step = norm(sub(detail::concat_blocks(st.x_blocks), prev_cat), Norm::l2);
    }
    if (!scaled_form) st.u[0] = scaled(1.0 / rho, nu);
    rep.x = detail::concat_blocks(st.x_blocks);
    rep.aux["x_0"] = st.x_blocks[0];
    rep.aux["x_1"] = st.x_blocks[1];
    rep.aux["u"] = st.u[0];
    rep.stats["rho"] = rho;
    if (final_state) *final_state = st;
    return rep;
}

// ---------------------------------------------------------------------------
// general constrained splitting
// ---------------------------------------------------------------------------

/// Per-block constrained minimization of sum_i fi(xi) s.t. yi(xi) <= 0 and
/// hi(xi) = 0.  Inequalities become equalities through y' = (max(0, y))^2,
/// each block minimizes
///   fi(v) + (rho/2)[(y'(v) + u_li)^2 + (h(v) + u_ni)^2]
/// against frozen duals (the blocks are independent), and the duals then
/// step by u_li += rho y'(xi+), u_ni += rho h(xi+).
inline Report admm_general(const BlockProblem& bp, double rho,
                           const std::vector<InnerSolve>& inner, const StopRule& stop,
                           const std::vector<Vector>& x0s, AdmmState* final_state = nullptr) {
    const std::size_t m = bp.blocks.size();
    if (m == 0) throw ParameterError("admm_general: no blocks");
    if (bp.coupling != Coupling::general)
        throw InvalidKindError("admm_general: general coupling required");
    if (!(rho > 0.0)) throw ParameterError("admm_general: rho must be positive");
    detail::require_inner_shape(inner, m, "admm_general");
    if (!stop.any_enabled())
        throw ParameterError("admm_general: stop rule must enable at least one criterion");
    if (x0s.size() != m) throw DimensionError("admm_general: one start per block required");
    for (std::size_t i = 0; i < m; ++i) {
        const Oracle& o = bp.blocks[i].oracle;
        if (!o.value || !o.gradient)
            throw CapabilityError("admm_general: block oracle must provide value and gradient");
        if (!all_finite(x0s[i])) throw ParameterError("admm_general: x0 must be finite");
        if (detail::block_inner(inner, i).mode == InnerSolve::Mode::prox)
            throw CapabilityError("admm_general: prox inner mode is not available");
    }

    AdmmState st;
    st.x_blocks = x0s;
    st.rho = rho;
    st.u.assign(m, Vector(2, 0.0));  // per block: scaled duals for y' and h

    // fi(v) + (rho/2)[(y'(v) + ul)^2 + (h(v) + un)^2] with frozen duals
    auto penalized = [&](std::size_t i, double ul, double un) {
        const Block& blk = bp.blocks[i];
        Oracle o;
        o.value = [&blk, rho, ul, un](const Vector& v) {
            double val = blk.oracle.value(v);
            if (blk.ineq) {
                double t = hinge_sq_value(*blk.ineq, v) + ul;
                val += 0.5 * rho * t * t;
            }
            if (blk.eq) {
                double t = blk.eq->value(v) + un;
                val += 0.5 * rho * t * t;
            }
            return val;
        };
        o.gradient = [&blk, rho, ul, un](const Vector& v) {
            Vector g = blk.oracle.gradient(v);
            if (blk.ineq) {
                double t = hinge_sq_value(*blk.ineq, v) + ul;
                axpy(rho * t, hinge_sq_gradient(*blk.ineq, v), g);
            }
            if (blk.eq) {
                double t = blk.eq->value(v) + un;
                axpy(rho * t, blk.eq->gradient(v), g);
            }
            return g;
        };
        bool can_hess = bp.blocks[i].oracle.hessian &&
                        (!blk.ineq || blk.ineq->hessian) && (!blk.eq || blk.eq->hessian);
        if (can_hess)
            o.hessian = [&blk, rho, ul, un](const Vector& v) {
                Matrix h = blk.oracle.hessian(v);
                if (blk.ineq) {
                    double t = hinge_sq_value(*blk.ineq, v) + ul;
                    Vector g = hinge_sq_gradient(*blk.ineq, v);
                    detail::add_in_place(h, rho, outer(g, g));
                    detail::add_in_place(h, rho * t, hinge_sq_hessian(*blk.ineq, v));
                }
                if (blk.eq) {
                    double t = blk.eq->value(v) + un;
                    Vector g = blk.eq->gradient(v);
                    detail::add_in_place(h, rho, outer(g, g));
                    detail::add_in_place(h, rho * t, blk.eq->hessian(v));
                }
                return h;
            };
        return o;
    };
    auto violation = [&]() {
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (bp.blocks[i].ineq) {
                double v = hinge_sq_value(*bp.blocks[i].ineq, st.x_blocks[i]);
                sq += v * v;
            }
            if (bp.blocks[i].eq) {
                double v = bp.blocks[i].eq->value(st.x_blocks[i]);
                sq += v * v;
            }
        }
        return std::sqrt(sq);
    };

    Report rep;
    std::vector<double> r_hist;
    double s_norm = 0.0;
    for (long long k = 0;; ++k) {
        double f = 0.0;
        for (std::size_t i = 0; i < m; ++i) f += bp.blocks[i].oracle.value(st.x_blocks[i]);
        double rn = violation();
        bool finite = std::isfinite(f) && std::isfinite(rn);
        for (std::size_t i = 0; i < m && finite; ++i) finite = all_finite(st.x_blocks[i]);
        if (!finite) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        if (k > 0) rec.gnorm = std::max(rn, s_norm);
        rec.step = s_norm / rho;
        rec.extras["r_norm"] = rn;
        rec.extras["s_norm"] = s_norm;
        double usq = 0.0;
        for (const Vector& ui : st.u) usq += dot(ui, ui);
        rec.extras["nu_norm"] = rho * std::sqrt(usq);
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        double move_sq = 0.0;
        bool failed = false;
        for (std::size_t i = 0; i < m && !failed; ++i) {
            const InnerSolve& spec = detail::block_inner(inner, i);
            Oracle phi = penalized(i, st.u[i][0], st.u[i][1]);
            try {
                Vector next = spec.mode == InnerSolve::Mode::exact
                                  ? detail::newton_inner_run(phi, st.x_blocks[i])
                                  : detail::gd_inner_run(phi, st.x_blocks[i], spec.gd_steps);
                Vector d = sub(next, st.x_blocks[i]);
                move_sq += dot(d, d);
                st.x_blocks[i] = next;
            } catch (const Error&) {
                rep.status = Status::aborted;
                rep.stats["aborted_block"] = static_cast<double>(i);
                failed = true;
            }
        }
        if (failed) break;
        for (std::size_t i = 0; i < m; ++i) {
            if (bp.blocks[i].ineq)
                st.u[i][0] += rho * hinge_sq_value(*bp.blocks[i].ineq, st.x_blocks[i]);
            if (bp.blocks[i].eq) st.u[i][1] += rho * bp.blocks[i].eq->value(st.x_blocks[i]);
        }
        s_norm = rho * std::sqrt(move_sq);
        st.primal_residuals.push_back(violation());
        st.dual_residuals.push_back(s_norm);
    }
    rep.x = detail::concat_blocks(st.x_blocks);
    Vector ul(m, 0.0), un(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        rep.aux["x_" + std::to_string(i)] = st.x_blocks[i];
        ul[i] = st.u[i][0];
        un[i] = st.u[i][1];
    }
    rep.aux["u_lambda"] = ul;
    rep.aux["u_nu"] = un;
    rep.stats["rho"] = rho;
    if (final_state) *final_state = st;
    return rep;
}

// ---------------------------------------------------------------------------
// consensus splitting
// ---------------------------------------------------------------------------

/// Minimizes sum_i fi(x) by giving every term its own copy xi tied to a
/// shared z.  One pass runs the independent updates
///   xi <- argmin fi(v) + (rho/2)||v - z + ui||^2   (prox of fi/rho at z - ui),
/// aggregates z <- mean(xi + ui), and steps the scaled duals ui += xi - z.
inline Report consensus_admm(const std::vector<Oracle>& terms, double rho,
                             const std::vector<InnerSolve>& inner, const StopRule& stop,
                             const Vector& z0, AdmmState* final_state = nullptr) {
    const std::size_t m = terms.size();
    if (m == 0) throw ParameterError("consensus_admm: no terms");
    if (!(rho > 0.0)) throw ParameterError("consensus_admm: rho must be positive");
    detail::require_inner_shape(inner, m, "consensus_admm");
    if (!stop.any_enabled())
        throw ParameterError("consensus_admm: stop rule must enable at least one criterion");
    if (!all_finite(z0)) throw ParameterError("consensus_admm: z0 must be finite");
    for (std::size_t i = 0; i < m; ++i) {
        if (!terms[i].value) throw CapabilityError("consensus_admm: term lacks value");
        const InnerSolve& spec = detail::block_inner(inner, i);
        if (spec.mode == InnerSolve::Mode::prox && !terms[i].prox)
            throw CapabilityError("consensus_admm: prox inner needs a prox oracle");
        if (spec.mode != InnerSolve::Mode::prox && !terms[i].gradient)
            throw CapabilityError("consensus_admm: gd and exact inners need a gradient oracle");
    }

    AdmmState st;
    st.rho = rho;
    st.z = z0;
    st.x_blocks.assign(m, z0);
    st.u.assign(m, Vector(z0.size(), 0.0));

    Report rep;
    std::vector<double> r_hist;
    double s_norm = 0.0;
    auto spread = [&]() {
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            Vector d = sub(st.x_blocks[i], st.z);
            sq += dot(d, d);
        }
        return std::sqrt(sq);
    };

    for (long long k = 0;; ++k) {
        double f = 0.0;
        for (const Oracle& t : terms) f += t.value(st.z);
        double rn = spread();
        bool finite = std::isfinite(f) && all_finite(st.z);
        if (!finite) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        if (k > 0) rec.gnorm = std::max(rn, s_norm);
        rec.step = s_norm / rho;
        rec.extras["r_norm"] = rn;
        rec.extras["s_norm"] = s_norm;
        double usq = 0.0;
        for (const Vector& ui : st.u) usq += dot(ui, ui);
        rec.extras["nu_norm"] = rho * std::sqrt(usq);
        r_hist.push_back(rn);
        StopReason why = push_trace(rep, stop, std::move(rec));
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        if (detail::residual_blowup(r_hist)) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            break;
        }
        bool failed = false;
        for (std::size_t i = 0; i < m && !failed; ++i) {
            const InnerSolve& spec = detail::block_inner(inner, i);
            Vector v = sub(st.z, st.u[i]);
            try {
                if (spec.mode == InnerSolve::Mode::prox) {
                    st.x_blocks[i] = terms[i].prox(1.0 / rho, v);
                } else {
                    Oracle phi;
                    const Oracle& fi = terms[i];
                    phi.value = [&fi, v, rho](const Vector& p) {
                        Vector d = sub(p, v);
                        return fi.value(p) + 0.5 * rho * dot(d, d);
                    };
                    phi.gradient = [&fi, v, rho](const Vector& p) {
                        Vector g = fi.gradient(p);
                        axpy(rho, sub(p, v), g);
                        return g;
                    };
                    if (fi.hessian)
                        phi.hessian = [&fi, rho](const Vector& p) {
                            Matrix h = fi.hessian(p);
                            for (std::size_t j = 0; j < h.rows; ++j) h(j, j) += rho;
                            return h;
                        };
                    st.x_blocks[i] = spec.mode == InnerSolve::Mode::exact
                                         ? detail::newton_inner_run(phi, st.x_blocks[i])
                                         : detail::gd_inner_run(phi, st.x_blocks[i], spec.gd_steps);
                }
            } catch (const Error&) {
                rep.status = Status::aborted;
                rep.stats["aborted_block"] = static_cast<double>(i);
                failed = true;
            }
        }
        if (failed) break;
        Vector z_old = st.z;
        Vector z_new(st.z.size(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            axpy(1.0, st.x_blocks[i], z_new);
            axpy(1.0, st.u[i], z_new);
        }
        for (double& zi : z_new) zi /= static_cast<double>(m);
        st.z = z_new;
        for (std::size_t i = 0; i < m; ++i) {
            axpy(1.0, st.x_blocks[i], st.u[i]);
            axpy(-1.0, st.z, st.u[i]);
        }
        s_norm = rho * std::sqrt(static_cast<double>(m)) * norm(sub(st.z, z_old), Norm::l2);
        st.primal_residuals.push_back(spread());
        st.dual_residuals.push_back(s_norm);
    }
    rep.x = st.z;
    rep.aux["z"] = st.z;
    for (std::size_t i = 0; i < m; ++i) {
        rep.aux["x_" + std::to_string(i)] = st.x_blocks[i];
        rep.aux["u_" + std::to_string(i)] = st.u[i];
    }
    rep.stats["rho"] = rho;
    if (final_state) *final_state = st;
    return rep;
}

}  // namespace descentforge
