#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "descentforge/core.hpp"
#include "descentforge/linesearch.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// LU with partial pivoting
// ---------------------------------------------------------------------------

struct LuFactors {
    Matrix lu;                      // L below diagonal (unit), U on and above
    std::vector<std::size_t> perm;  // row permutation
};

inline LuFactors lu_factor(Matrix m) {
    if (m.rows != m.cols) throw DimensionError("lu_factor: matrix must be square");
    std::size_t n = m.rows;
    double scale = norm(m, Norm::linf);
    double tol = 1e-12 * scale;
    LuFactors f;
    f.perm.resize(n);
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            double v = std::fabs(m(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best <= tol)
            throw SingularMatrixError("lu_factor: singular to tolerance at pivot index " +
                                      std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(f.perm[k], f.perm[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            double l = m(i, k) / m(k, k);
            m(i, k) = l;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
        }
    }
    f.lu = std::move(m);
    return f;
}

inline Vector lu_solve(const LuFactors& f, const Vector& q) {
    std::size_t n = f.lu.rows;
    if (q.size() != n) throw DimensionError("lu_solve: rhs dimension mismatch");
    Vector z(n);
    for (std::size_t i = 0; i < n; ++i) {  // permute + forward pass
        double s = q[f.perm[i]];
        for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * z[j];
        z[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {  // backward pass
        double s = z[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= f.lu(ii, j) * z[j];
        z[ii] = s / f.lu(ii, ii);
    }
    return z;
}

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

inline Matrix cholesky_factor(const Matrix& m) {
    if (m.rows != m.cols) throw DimensionError("cholesky_factor: matrix must be square");
    std::size_t n = m.rows;
    double scale = norm(m, Norm::linf);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::fabs(m(i, j) - m(j, i)) > 1e-10 * (1.0 + scale))
                throw DefinitenessError("cholesky_factor: matrix is not symmetric");
    Matrix L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (d <= 1e-14 * (1.0 + scale))
            throw DefinitenessError("cholesky_factor: matrix is not positive definite (row " +
                                    std::to_string(j) + ")");
        L(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

inline Vector cholesky_solve(const Matrix& L, const Vector& q) {
    std::size_t n = L.rows;
    if (q.size() != n) throw DimensionError("cholesky_solve: rhs dimension mismatch");
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = q[i];
        for (std::size_t j = 0; j < i; ++j) s -= L(i, j) * y[j];
        y[i] = s / L(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= L(j, ii) * y[j];
        y[ii] = s / L(ii, ii);
    }
    return y;
}

// ---------------------------------------------------------------------------
// direct solves
// ---------------------------------------------------------------------------

enum class SolveMethod { lu, cholesky, auto_pick };

namespace detail {

inline bool nearly_symmetric(const Matrix& m) {
    if (m.rows != m.cols) return false;
    double scale = norm(m, Norm::linf);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (std::fabs(m(i, j) - m(j, i)) > 1e-10 * (1.0 + scale)) return false;
    return true;
}

/// One pass of iterative refinement tightens the residual guarantee on
/// ill-conditioned systems without changing well-conditioned answers.
template <class Solve>
Vector refine(const Matrix& m, const Vector& q, Vector z, Solve&& solve) {
    Vector r = sub(q, matvec(m, z));
    if (norm(r, Norm::linf) > 1e-11 * (1.0 + norm(q, Norm::linf))) {
        Vector dz = solve(r);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += dz[i];
    }
    return z;
}

}  // namespace detail

inline Vector solve_linear(const Matrix& m, const Vector& q,
                           SolveMethod method = SolveMethod::auto_pick) {
    if (m.rows != m.cols) throw DimensionError("solve_linear: matrix must be square");
    if (m.rows != q.size()) throw DimensionError("solve_linear: rhs dimension mismatch");
    if (method == SolveMethod::cholesky ||
        (method == SolveMethod::auto_pick && detail::nearly_symmetric(m))) {
        try {
            Matrix L = cholesky_factor(m);
            auto solve = [&](const Vector& rhs) { return cholesky_solve(L, rhs); };
            return detail::refine(m, q, solve(q), solve);
        } catch (const DefinitenessError&) {
            if (method == SolveMethod::cholesky) throw;
            // fall through to LU
        }
    }
    LuFactors f = lu_factor(m);
    auto solve = [&](const Vector& rhs) { return lu_solve(f, rhs); };
    return detail::refine(m, q, solve(q), solve);
}

// ---------------------------------------------------------------------------
// Schur-complement block solve
// ---------------------------------------------------------------------------

struct BlockSystem {
    Matrix M11, M12, M21, M22;
    Vector q1, q2;
};

/// Four-step block elimination:
///   (1) W = M11^-1 M12 and w = M11^-1 q1,
///   (2) Schur complement S = M22 - M21 W and qs = q2 - M21 w,
///   (3) solve S z2 = qs,
///   (4) solve M11 z1 = q1 - M12 z2.
inline std::pair<Vector, Vector> solve_schur(const BlockSystem& sys) {
    std::size_t n1 = sys.M11.rows, n2 = sys.M22.rows;
    if (sys.M11.cols != n1 || sys.M22.cols != n2 || sys.M12.rows != n1 || sys.M12.cols != n2 ||
        sys.M21.rows != n2 || sys.M21.cols != n1 || sys.q1.size() != n1 || sys.q2.size() != n2)
        throw DimensionError("solve_schur: block dimensions not conformable");

    LuFactors f11;
    try {
        f11 = lu_factor(sys.M11);
    } catch (const SingularMatrixError&) {
        throw SingularMatrixError("solve_schur: block M11 is singular");
    }
    Matrix W(n1, n2);
    for (std::size_t j = 0; j < n2; ++j) {
        Vector col(n1);
        for (std::size_t i = 0; i < n1; ++i) col[i] = sys.M12(i, j);
        Vector sol = lu_solve(f11, col);
        for (std::size_t i = 0; i < n1; ++i) W(i, j) = sol[i];
    }
    Vector w = lu_solve(f11, sys.q1);

    Matrix S = sys.M22;
    Matrix M21W = matmul(sys.M21, W);
    for (std::size_t i = 0; i < n2 * n2; ++i) S.a[i] -= M21W.a[i];
    Vector qs = sub(sys.q2, matvec(sys.M21, w));

    Vector z2;
    try {
        z2 = lu_solve(lu_factor(S), qs);
    } catch (const SingularMatrixError&) {
        throw SingularMatrixError("solve_schur: Schur complement block is singular");
    }
    Vector rhs1 = sub(sys.q1, matvec(sys.M12, z2));
    Vector z1 = lu_solve(f11, rhs1);
    return {std::move(z1), std::move(z2)};
}

// ---------------------------------------------------------------------------
// conjugate gradient
// ---------------------------------------------------------------------------

struct CgResult {
    Vector z;
    long long iters = 0;
    bool converged = false;
    double residual = 0.0;
    std::vector<Vector> directions;  // retained for conjugacy diagnostics
};

inline CgResult conjugate_gradient(const Matrix& m, const Vector& q, const Vector& x0, double tol,
                                   long long max_iters, bool keep_directions = false) {
    if (m.rows != m.cols) throw DimensionError("conjugate_gradient: matrix must be square");
    if (!detail::nearly_symmetric(m))
        throw ParameterError("conjugate_gradient: matrix must be symmetric");
    CgResult res;
    Vector z = x0;
    Vector r = sub(q, matvec(m, z));
    Vector p = r;
    double rr = dot(r, r);
    Vector best_z = z;
    double best_res = std::sqrt(rr);
    for (long long k = 0; k < max_iters; ++k) {
        if (std::sqrt(rr) <= tol) break;
        if (keep_directions) res.directions.push_back(p);
        Vector mp = matvec(m, p);
        double pmp = dot(p, mp);
        if (!(pmp > 0.0))
            throw DefinitenessError("conjugate_gradient: encountered p'Mp <= 0 (matrix not PD)");
        double eta = dot(p, r) / pmp;
        axpy(eta, p, z);
        axpy(-eta, mp, r);
        double rr_next = dot(r, r);
        ++res.iters;
        double rn = std::sqrt(rr_next);
        if (rn < best_res) {
            best_res = rn;
            best_z = z;
        }
        double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    res.residual = std::sqrt(rr);
    if (res.residual <= tol) {
        res.z = std::move(z);
        res.converged = true;
    } else {
        res.z = std::move(best_z);  // best iterate, caller sees converged=false
        res.residual = best_res;
        res.converged = false;
    }
    return res;
}

// ---------------------------------------------------------------------------
// nonlinear conjugate gradient
// ---------------------------------------------------------------------------

enum class NcgBeta { fr, pr, hs, dy };

struct NcgConfig {
    NcgBeta beta = NcgBeta::fr;
    StopRule stop;
    bool unclamped_pr = false;  // default applies the max(beta, 0) restart
    // strong Wolfe with a small c2 keeps successive directions near-conjugate
    double ls_c1 = 1e-4;
    double ls_c2 = 0.1;
    bool ls_strong = true;
};

inline Report nonlinear_cg(const Oracle& oracle, const Vector& x0, const NcgConfig& cfg) {
    if (!oracle.gradient) throw CapabilityError("nonlinear_cg: oracle lacks a gradient");
    Report rep;
    Vector x = x0;
    Vector g = oracle.gradient(x);
    Vector r = scaled(-1.0, g);
    Vector p = r;
    double step = 0.0;
    for (long long k = 0;; ++k) {
        TraceRecord rec;
        rec.k = k;
        rec.f = oracle.value(x);
        rec.gnorm = norm(g, Norm::l2);
        rec.step = step;
        bool finite = std::isfinite(rec.f) && all_finite(x);
        StopReason why = push_trace(rep, cfg.stop, rec);
        if (!finite) {
            rep.status = Status::diverged;
            break;
        }
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        if (dot(g, p) >= 0.0) p = r;  // non-descent direction: restart at steepest
        LineSearchResult ls = wolfe_search(oracle, x, p, cfg.ls_c1, cfg.ls_c2, cfg.ls_strong);
        step = ls.satisfied ? ls.eta : std::max(ls.eta, kLineSearchFloor);
        axpy(step, p, x);

        Vector g_next = oracle.gradient(x);
        Vector r_next = scaled(-1.0, g_next);
        double beta = 0.0;
        double rr = dot(r, r);
        Vector dr = sub(r_next, r);
        switch (cfg.beta) {
            case NcgBeta::fr:
                beta = rr > 0.0 ? dot(r_next, r_next) / rr : 0.0;
                break;
            case NcgBeta::pr:
                beta = rr > 0.0 ? dot(r_next, dr) / rr : 0.0;
                if (!cfg.unclamped_pr) beta = std::max(beta, 0.0);
                break;
            case NcgBeta::hs: {
                double den = dot(p, dr);
                beta = std::fabs(den) > 1e-300 ? -dot(r_next, dr) / den : 0.0;
                break;
            }
            case NcgBeta::dy: {
                double den = dot(p, dr);
                beta = std::fabs(den) > 1e-300 ? -dot(r_next, r_next) / den : 0.0;
                break;
            }
        }
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r_next[i] + beta * p[i];
        r = std::move(r_next);
        g = std::move(g_next);
    }
    rep.x = x;
    return rep;
}

// ---------------------------------------------------------------------------
// SVD (one-sided Jacobi) and symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct SvdResult {
    Matrix u;   // orthonormal columns
    Vector s;   // descending, nonnegative
    Matrix v;   // orthonormal columns
};

namespace detail {

/// Fill zero columns of u (rank-deficient input) with vectors orthonormal
/// to the existing columns so u'u stays the identity.
inline void complete_orthonormal(Matrix& u, const std::vector<bool>& valid) {
    std::size_t m = u.rows, n = u.cols;
    for (std::size_t j = 0; j < n; ++j) {
        if (valid[j]) continue;
        for (std::size_t cand = 0; cand < m; ++cand) {
            Vector e(m, 0.0);
            e[cand] = 1.0;
            for (std::size_t jj = 0; jj < n; ++jj) {
                if (jj == j) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < m; ++i) proj += u(i, jj) * e[i];
                for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u(i, jj);
            }
            double nrm = norm(e, Norm::l2);
            if (nrm > 1e-8) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = e[i] / nrm;
                break;
            }
        }
    }
}

inline SvdResult svd_tall(const Matrix& x) {
    std::size_t m = x.rows, n = x.cols;
    Matrix b = x;
    Matrix v = identity(n);
    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    app += b(i, p) * b(i, p);
                    aqq += b(i, q) * b(i, q);
                    apq += b(i, p) * b(i, q);
                }
                if (std::fabs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
                converged = false;
                double zeta = (aqq - app) / (2.0 * apq);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) throw ConvergenceError("svd: Jacobi sweeps exceeded iteration cap");

    Vector s(n);
    for (std::size_t j = 0; j < n; ++j) {
        double nrm2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) nrm2 += b(i, j) * b(i, j);
        s[j] = std::sqrt(nrm2);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

    SvdResult res;
    res.u = Matrix(m, n);
    res.v = Matrix(n, n);
    res.s.resize(n);
    double smax = s.empty() ? 0.0 : s[order[0]];
    std::vector<bool> valid(n, false);
    for (std::size_t jj = 0; jj < n; ++jj) {
        std::size_t src = order[jj];
        res.s[jj] = s[src];
        if (s[src] > std::max(1e-300, 1e-14 * smax)) {
            valid[jj] = true;
            for (std::size_t i = 0; i < m; ++i) res.u(i, jj) = b(i, src) / s[src];
        }
        for (std::size_t i = 0; i < n; ++i) res.v(i, jj) = v(i, src);
    }
    complete_orthonormal(res.u, valid);
    return res;
}

}  // namespace detail

inline SvdResult svd(const Matrix& x) {
    for (double v : x.a)
        if (!std::isfinite(v)) throw ParameterError("svd: non-finite entries");
    if (x.rows >= x.cols) return detail::svd_tall(x);
    SvdResult t = detail::svd_tall(transpose(x));
    SvdResult res;
    res.u = std::move(t.v);
    res.v = std::move(t.u);
    res.s = std::move(t.s);
    return res;
}

inline double spectral_norm(const Matrix& x) {
    if (x.rows == 0 || x.cols == 0) return 0.0;
    return svd(x).s[0];
}

struct EigResult {
    Vector values;  // descending
    Matrix q;       // columns are eigenvectors
};

inline EigResult eig_sym(const Matrix& h) {
    if (h.rows != h.cols) throw DimensionError("eig_sym: matrix must be square");
    if (!detail::nearly_symmetric(h)) throw ParameterError("eig_sym: matrix must be symmetric");
    std::size_t n = h.rows;
    Matrix a = h;
    Matrix q = identity(n);
    double scale = norm(h, Norm::linf);
    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t qq = p + 1; qq < n; ++qq) {
                double apq = a(p, qq);
                if (std::fabs(apq) <= 1e-14 * (1.0 + scale)) continue;
                converged = false;
                double theta = (a(qq, qq) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    double aip = a(i, p), aiq = a(i, qq);
                    a(i, p) = c * aip - s * aiq;
                    a(i, qq) = s * aip + c * aiq;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    double apj = a(p, j), aqj = a(qq, j);
                    a(p, j) = c * apj - s * aqj;
                    a(qq, j) = s * apj + c * aqj;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double qip = q(i, p), qiq = q(i, qq);
                    q(i, p) = c * qip - s * qiq;
                    q(i, qq) = s * qip + c * qiq;
                }
            }
        }
    }
    if (!converged) throw ConvergenceError("eig_sym: Jacobi sweeps exceeded iteration cap");

    Vector vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = a(i, i);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return vals[i] > vals[j]; });
    EigResult res;
    res.values.resize(n);
    res.q = Matrix(n, n);
    for (std::size_t jj = 0; jj < n; ++jj) {
        res.values[jj] = vals[order[jj]];
        for (std::size_t i = 0; i < n; ++i) res.q(i, jj) = q(i, order[jj]);
    }
    return res;
}

/// Largest-magnitude eigenvalue estimate (power iteration, deterministic start).
inline double power_iteration_lmax(const Matrix& m, int iters = 300) {
    if (m.rows != m.cols) throw DimensionError("power_iteration_lmax: matrix must be square");
    std::size_t n = m.rows;
    if (n == 0) return 0.0;
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i);
    double lambda = 0.0;
    for (int k = 0; k < iters; ++k) {
        Vector w = matvec(m, v);
        double nrm = norm(w, Norm::l2);
        if (nrm == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
        double next = dot(v, matvec(m, v));
        if (std::fabs(next - lambda) <= 1e-12 * (1.0 + std::fabs(next)) && k > 2) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::fabs(lambda);
}

}  // namespace descentforge
