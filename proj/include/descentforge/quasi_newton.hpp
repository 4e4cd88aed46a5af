#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/linesearch.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// secant updates
// ---------------------------------------------------------------------------

enum class QNVariant { bfgs, dfp, broyden, sr1 };
enum class QNTrack { hessian, inverse };

inline const char* qn_variant_name(QNVariant v) {
    switch (v) {
        case QNVariant::bfgs: return "bfgs";
        case QNVariant::dfp: return "dfp";
        case QNVariant::broyden: return "broyden";
        case QNVariant::sr1: return "sr1";
    }
    throw InvalidKindError("qn_variant_name: unknown variant");
}

/// One quasi-Newton approximation.  `m` holds B (an approximation of the
/// Hessian) on the hessian track, or H (an approximation of its inverse) on
/// the inverse track.  `skipped` reports whether the most recent qn_update
/// call hit the degenerate-denominator safeguard and left `m` unchanged.
struct QNState {
    Matrix m;
    QNVariant variant = QNVariant::bfgs;
    QNTrack track = QNTrack::inverse;
    bool skipped = false;
};

inline QNState qn_state(QNVariant variant, QNTrack track, std::size_t d) {
    QNState st;
    st.m = identity(d);
    st.variant = variant;
    st.track = track;
    return st;
}

namespace detail {

/// m += c * u v'.
inline void add_outer(Matrix& m, double c, const Vector& u, const Vector& v) {
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) += c * u[i] * v[j];
}

/// Rank-one denominators are usable when they clear 1e-8 relative to the
/// norms of the two vectors forming the inner product.
inline bool qn_denominator_ok(double denom, double na, double nb) {
    return std::fabs(denom) > 1e-8 * na * nb;
}

inline double vnorm2(const Vector& v) { return std::sqrt(dot(v, v)); }

}  // namespace detail

/// Applies one secant update for the state's variant and track.
///
/// Hessian track (B approximates the Hessian, secant B+ s = y):
///   bfgs:    B+ = B + y y'/(y's) - (B s)(B's)'/(s'Bs)
///   dfp:     B+ = V B V' + y y'/(y's),  V = I - y s'/(y's)
///   broyden: B+ = B + (y - B s) s'/(s's)
///   sr1:     B+ = B + r r'/(r's),  r = y - B s
/// Inverse track (H approximates the inverse Hessian, secant H+ y = s):
///   bfgs:    H+ = V' H V + s s'/(y's),  V = I - y s'/(y's)
///   dfp:     H+ = H + s s'/(y's) - (H y)(H'y)'/(y'Hy)
///   broyden: H+ = H + (s - H y)(H's)'/(s'Hy)
///   sr1:     H+ = H + r r'/(r'y),  r = s - H y
///
/// For sr1 and broyden a denominator smaller than 1e-8 times the product of
/// the norms of its two factors skips the update: the state comes back
/// unchanged with `skipped = true`.  For bfgs and dfp an exactly zero
/// denominator throws DivisionError; keeping the curvature y's positive is
/// the caller's job (a Wolfe line search guarantees it).
inline QNState qn_update(const QNState& state, const Vector& s, const Vector& y) {
    const std::size_t d = state.m.rows;
    if (state.m.rows != state.m.cols)
        throw DimensionError("qn_update: approximation matrix must be square");
    if (s.size() != d || y.size() != d)
        throw DimensionError("qn_update: s and y must match the matrix dimension");
    if (!all_finite(s) || !all_finite(y))
        throw ParameterError("qn_update: s and y must be finite");

    QNState next = state;
    next.skipped = false;
    Matrix& m = next.m;
    const Matrix& prev = state.m;
    const bool inverse = state.track == QNTrack::inverse;

    switch (state.variant) {
        case QNVariant::bfgs: {
            double sy = dot(y, s);
            if (sy == 0.0) throw DivisionError("qn_update: bfgs denominator y's is zero");
            double rho = 1.0 / sy;
            if (!inverse) {
                Vector bs = matvec(prev, s);
                Vector bts = tmatvec(prev, s);
                double sbs = dot(s, bs);
                if (sbs == 0.0) throw DivisionError("qn_update: bfgs denominator s'Bs is zero");
                detail::add_outer(m, rho, y, y);
                detail::add_outer(m, -1.0 / sbs, bs, bts);
            } else {
                Vector hy = matvec(prev, y);
                Vector hty = tmatvec(prev, y);
                double yhy = dot(y, hy);
                detail::add_outer(m, -rho, s, hty);
                detail::add_outer(m, -rho, hy, s);
                detail::add_outer(m, rho * rho * yhy + rho, s, s);
            }
            break;
        }
        case QNVariant::dfp: {
            double sy = dot(y, s);
            if (sy == 0.0) throw DivisionError("qn_update: dfp denominator y's is zero");
            double rho = 1.0 / sy;
            if (!inverse) {
                Vector bs = matvec(prev, s);
                Vector bts = tmatvec(prev, s);
                double sbs = dot(s, bs);
                detail::add_outer(m, -rho, y, bts);
                detail::add_outer(m, -rho, bs, y);
                detail::add_outer(m, rho * rho * sbs + rho, y, y);
            } else {
                Vector hy = matvec(prev, y);
                Vector hty = tmatvec(prev, y);
                double yhy = dot(y, hy);
                if (yhy == 0.0) throw DivisionError("qn_update: dfp denominator y'Hy is zero");
                detail::add_outer(m, rho, s, s);
                detail::add_outer(m, -1.0 / yhy, hy, hty);
            }
            break;
        }
        case QNVariant::broyden: {
            if (!inverse) {
                Vector r = sub(y, matvec(prev, s));
                double denom = dot(s, s);
                double ns = detail::vnorm2(s);
                if (!detail::qn_denominator_ok(denom, ns, ns)) {
                    next.skipped = true;
                    break;
                }
                detail::add_outer(m, 1.0 / denom, r, s);
            } else {
                Vector hy = matvec(prev, y);
                Vector r = sub(s, hy);
                Vector hts = tmatvec(prev, s);
                double denom = dot(s, hy);
                if (!detail::qn_denominator_ok(denom, detail::vnorm2(s), detail::vnorm2(hy))) {
                    next.skipped = true;
                    break;
                }
                detail::add_outer(m, 1.0 / denom, r, hts);
            }
            break;
        }
        case QNVariant::sr1: {
            if (!inverse) {
                Vector r = sub(y, matvec(prev, s));
                double denom = dot(r, s);
                if (!detail::qn_denominator_ok(denom, detail::vnorm2(r), detail::vnorm2(s))) {
                    next.skipped = true;
                    break;
                }
                detail::add_outer(m, 1.0 / denom, r, r);
            } else {
                Vector r = sub(s, matvec(prev, y));
                double denom = dot(r, y);
                if (!detail::qn_denominator_ok(denom, detail::vnorm2(r), detail::vnorm2(y))) {
                    next.skipped = true;
                    break;
                }
                detail::add_outer(m, 1.0 / denom, r, r);
            }
            break;
        }
    }
    return next;
}

// ---------------------------------------------------------------------------
// full-matrix solver
// ---------------------------------------------------------------------------

namespace detail {

/// Near the resolution floor of double the per-step decrease drops below one
/// ulp of f, so no line search can certify the Wolfe conditions even though
/// they hold in exact arithmetic.  Accept the unit step in that regime when
/// it strictly shrinks the gradient norm and moves the value by at most ulp
/// noise.
inline bool fp_floor_accept(const Oracle& oracle, const Vector& x, const Vector& p, double f,
                            double gn) {
    Vector trial = x;
    axpy(1.0, p, trial);
    if (!all_finite(trial)) return false;
    Vector gt = oracle.gradient(trial);
    if (!all_finite(gt) || !(norm(gt, Norm::l2) < gn)) return false;
    double ft = oracle.value(trial);
    double slack = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(f));
    return std::isfinite(ft) && ft <= f + slack;
}

}  // namespace detail

/// Minimizes with a dense quasi-Newton approximation on the inverse track,
/// starting from H = I.  Each iteration takes p = -H grad f, finds the step
/// with a Wolfe search, forms s = x+ - x and y = grad f(x+) - grad f(x), and
/// refreshes H via qn_update.  An unsatisfied Wolfe search first retries the
/// unit step under the floating-point floor acceptance (extras["fp_floor"] =
/// 1 on the arriving record) and otherwise falls back to plain steepest
/// descent with a halving search (extras["fallback"] = 1).  Updates are
/// skipped (extras["qn_skip"] = 1) when the safeguard fires or, for bfgs and
/// dfp, when the curvature y's fails to clear 1e-12 |y||s|.
///
/// aux holds the final approximation flattened row-major ("qn_matrix") and
/// every accepted displacement ("s_<k>" for the step leaving iterate k).
inline Report qn_solve(const Problem& problem, QNVariant variant, const Vector& x0,
                       const StopRule& stop) {
    const Oracle& oracle = problem.oracle;
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("qn_solve: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("qn_solve: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("qn_solve: stop rule must enable at least one criterion");

    QNState state = qn_state(variant, QNTrack::inverse, x0.size());
    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
    double step = 0.0;
    double pending_fallback = 0.0;
    double pending_skip = 0.0;
    double pending_floor = 0.0;
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
        if (pending_fallback != 0.0) rec.extras["fallback"] = pending_fallback;
        if (pending_skip != 0.0) rec.extras["qn_skip"] = pending_skip;
        if (pending_floor != 0.0) rec.extras["fp_floor"] = pending_floor;
        pending_fallback = 0.0;
        pending_skip = 0.0;
        pending_floor = 0.0;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;

        double gn = *rec.gnorm;
        if (gn == 0.0) {
            step = 0.0;
            continue;
        }
        Vector p = scaled(-1.0, matvec(state.m, g));
        bool fallback = !(dot(g, p) < 0.0);
        if (fallback) p = scaled(-1.0, g);
        LineSearchResult ls = wolfe_search(oracle, x, p);
        double eta = ls.eta;
        bool floor_step = false;
        if (!ls.satisfied) {
            if (detail::fp_floor_accept(oracle, x, p, f, gn)) {
                eta = 1.0;
                floor_step = true;
            } else if (!fallback) {
                fallback = true;
                p = scaled(-1.0, g);
                eta = halving_search(oracle, x, p, 1.0).eta;
            }
        }
        Vector xn = x;
        axpy(eta, p, xn);
        Vector gnew = oracle.gradient(xn);
        if (all_finite(xn) && all_finite(gnew)) {
            Vector s = sub(xn, x);
            Vector y = sub(gnew, g);
            double sy = dot(y, s);
            bool curvature_ok = sy > 1e-12 * detail::vnorm2(y) * detail::vnorm2(s);
            bool skip = false;
            if (variant == QNVariant::bfgs || variant == QNVariant::dfp) {
                if (curvature_ok) {
                    state = qn_update(state, s, y);
                } else {
                    skip = true;
                }
            } else {
                state = qn_update(state, s, y);
                skip = state.skipped;
            }
            if (!skip) rep.aux["s_" + std::to_string(k)] = s;
            pending_skip = skip ? 1.0 : 0.0;
        }
        pending_fallback = fallback ? 1.0 : 0.0;
        pending_floor = floor_step ? 1.0 : 0.0;
        x = xn;
        step = eta;
    }
    rep.x = x;
    rep.aux["qn_matrix"] = state.m.a;
    rep.stats["qn_dim"] = static_cast<double>(state.m.rows);
    return rep;
}

// ---------------------------------------------------------------------------
// limited-memory BFGS
// ---------------------------------------------------------------------------

struct LbfgsEntry {
    Vector s;
    Vector y;
    double rho = 0.0;
};

/// Ring buffer of the most recent curvature pairs.  push refuses entries
/// whose curvature y's fails to clear 1e-12 |y||s| and reports the refusal;
/// gamma tracks s'y / y'y of the newest stored pair.
struct LbfgsMemory {
    std::size_t capacity = 0;
    std::vector<LbfgsEntry> entries;
    double gamma = 0.0;

    explicit LbfgsMemory(std::size_t m = 1) : capacity(m) {
        if (m < 1) throw ParameterError("LbfgsMemory: capacity must be at least 1");
    }

    bool push(const Vector& s, const Vector& y) {
        double sy = dot(y, s);
        if (!(sy > 1e-12 * detail::vnorm2(y) * detail::vnorm2(s))) return false;
        double yy = dot(y, y);
        gamma = sy / yy;
        entries.push_back(LbfgsEntry{s, y, 1.0 / sy});
        if (entries.size() > capacity) entries.erase(entries.begin());
        return true;
    }
};

namespace detail {

/// Recursive two-sided correction.  Applying it with j stored pairs
/// reproduces H p for the H built by chaining the inverse bfgs update from
/// H0 = h0 I through those pairs, truncated to the m most recent entries:
///   p~ = p - rho (s'p) y
///   p^ = recurse(p~)
///   return p^ - rho (y'p^) s + rho (s'p) s
inline Vector lbfgs_direction(const std::vector<LbfgsEntry>& mem, std::size_t j,
                              std::size_t n_rec, std::size_t m, double h0, const Vector& p) {
    if (j == 0) return scaled(h0, p);
    if (n_rec > m) return p;
    const LbfgsEntry& e = mem[j - 1];
    double sp = dot(e.s, p);
    Vector pt = p;
    axpy(-e.rho * sp, e.y, pt);
    Vector ph = lbfgs_direction(mem, j - 1, n_rec + 1, m, h0, pt);
    axpy(-e.rho * dot(e.y, ph), e.s, ph);
    axpy(e.rho * sp, e.s, ph);
    return ph;
}

}  // namespace detail

/// H p for the limited-memory approximation held in `memory`, base scaling
/// h0.  With no stored pairs this is h0 p.
inline Vector lbfgs_direction(const LbfgsMemory& memory, double h0, const Vector& p) {
    return detail::lbfgs_direction(memory.entries, memory.entries.size(), 1, memory.capacity,
                                   h0, p);
}

/// Limited-memory BFGS.  The base scaling is fixed at h0 = 1/|grad f(x0)|
/// so the direction with full memory matches a dense inverse-track bfgs run
/// started from H = h0 I.  Steps use a Wolfe search with the same floor
/// acceptance and steepest-descent fallback as qn_solve.  extras carry
/// per-record "gamma" (s'y/y'y of the newest stored pair, h0 before the
/// first store) and "stored" (current number of memory entries), plus the
/// fallback, qn_skip, and fp_floor flags.
inline Report lbfgs_solve(const Problem& problem, std::size_t m, const Vector& x0,
                          const StopRule& stop) {
    const Oracle& oracle = problem.oracle;
    if (m < 1) throw ParameterError("lbfgs_solve: memory must be at least 1");
    if (!oracle.value || !oracle.gradient)
        throw CapabilityError("lbfgs_solve: oracle must provide value and gradient");
    if (!all_finite(x0)) throw ParameterError("lbfgs_solve: x0 must be finite");
    if (!stop.any_enabled())
        throw ParameterError("lbfgs_solve: stop rule must enable at least one criterion");

    LbfgsMemory memory(m);
    Report rep;
    Vector x = x0;
    Vector prev_x = x0;
    double step = 0.0;
    double h0 = 1.0;
    double pending_fallback = 0.0;
    double pending_skip = 0.0;
    double pending_floor = 0.0;
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
        if (k == 0) {
            h0 = gn > 0.0 ? 1.0 / gn : 1.0;
            memory.gamma = h0;
        }
        TraceRecord rec;
        rec.k = k;
        rec.f = f;
        rec.gnorm = gn;
        rec.step = step;
        rec.extras["gamma"] = memory.gamma;
        rec.extras["stored"] = static_cast<double>(memory.entries.size());
        if (pending_fallback != 0.0) rec.extras["fallback"] = pending_fallback;
        if (pending_skip != 0.0) rec.extras["qn_skip"] = pending_skip;
        if (pending_floor != 0.0) rec.extras["fp_floor"] = pending_floor;
        pending_fallback = 0.0;
        pending_skip = 0.0;
        pending_floor = 0.0;
        StopReason why = push_trace(rep, stop, rec);
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }
        prev_x = x;

        if (gn == 0.0) {
            step = 0.0;
            continue;
        }
        Vector p = lbfgs_direction(memory, h0, scaled(-1.0, g));
        bool fallback = !(dot(g, p) < 0.0);
        if (fallback) p = scaled(-1.0, g);
        LineSearchResult ls = wolfe_search(oracle, x, p);
        double eta = ls.eta;
        bool floor_step = false;
        if (!ls.satisfied) {
            if (detail::fp_floor_accept(oracle, x, p, f, gn)) {
                eta = 1.0;
                floor_step = true;
            } else if (!fallback) {
                fallback = true;
                p = scaled(-1.0, g);
                eta = halving_search(oracle, x, p, 1.0).eta;
            }
        }
        Vector xn = x;
        axpy(eta, p, xn);
        Vector gnew = oracle.gradient(xn);
        if (all_finite(xn) && all_finite(gnew)) {
            Vector s = sub(xn, x);
            Vector y = sub(gnew, g);
            pending_skip = memory.push(s, y) ? 0.0 : 1.0;
        }
        pending_fallback = fallback ? 1.0 : 0.0;
        pending_floor = floor_step ? 1.0 : 0.0;
        x = xn;
        step = eta;
    }
    rep.x = x;
    rep.stats["lbfgs_memory"] = static_cast<double>(m);
    rep.stats["lbfgs_stored"] = static_cast<double>(memory.entries.size());
    return rep;
}

}  // namespace descentforge
