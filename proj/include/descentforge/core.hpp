#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace descentforge {

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class CapabilityError : public Error { public: using Error::Error; };
class InvalidKindError : public Error { public: using Error::Error; };
class EvaluationError : public Error { public: using Error::Error; };
class SingularMatrixError : public Error { public: using Error::Error; };
class DefinitenessError : public Error { public: using Error::Error; };
class RankError : public Error { public: using Error::Error; };
class FeasibilityError : public Error { public: using Error::Error; };
class BracketError : public Error { public: using Error::Error; };
class ConvergenceError : public Error { public: using Error::Error; };
class DivergenceError : public Error { public: using Error::Error; };
class DivisionError : public Error { public: using Error::Error; };

// ---------------------------------------------------------------------------
// dense types
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;  // row-major
    bool symmetric = false;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    /// Validates symmetry within 1e-12 (absolute, entrywise) and sets the flag.
    void mark_symmetric() {
        if (rows != cols) throw DimensionError("mark_symmetric: matrix is not square");
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = i + 1; j < cols; ++j)
                if (std::fabs((*this)(i, j) - (*this)(j, i)) > 1e-12)
                    throw ParameterError("mark_symmetric: asymmetry exceeds 1e-12 at (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");
        symmetric = true;
    }
};

inline Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    m.symmetric = true;
    return m;
}

inline void require_same_dim(const Vector& x, const Vector& y, const char* where) {
    if (x.size() != y.size())
        throw DimensionError(std::string(where) + ": dimension mismatch " +
                             std::to_string(x.size()) + " vs " + std::to_string(y.size()));
}

inline double dot(const Vector& x, const Vector& y) {
    require_same_dim(x, y, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline Vector add(const Vector& x, const Vector& y) {
    require_same_dim(x, y, "add");
    Vector r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] + y[i];
    return r;
}

inline Vector sub(const Vector& x, const Vector& y) {
    require_same_dim(x, y, "sub");
    Vector r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] - y[i];
    return r;
}

inline Vector scaled(double c, const Vector& x) {
    Vector r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = c * x[i];
    return r;
}

/// y += a*x
inline void axpy(double a, const Vector& x, Vector& y) {
    require_same_dim(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vector matvec(const Matrix& m, const Vector& x) {
    if (m.cols != x.size())
        throw DimensionError("matvec: matrix cols " + std::to_string(m.cols) +
                             " vs vector dim " + std::to_string(x.size()));
    Vector r(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        r[i] = s;
    }
    return r;
}

/// m' * x
inline Vector tmatvec(const Matrix& m, const Vector& x) {
    if (m.rows != x.size())
        throw DimensionError("tmatvec: matrix rows " + std::to_string(m.rows) +
                             " vs vector dim " + std::to_string(x.size()));
    Vector r(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += m(i, j) * x[i];
    return r;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Matrix r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) r(i, j) += aik * b(k, j);
        }
    return r;
}

inline Matrix transpose(const Matrix& m) {
    Matrix r(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
    return r;
}

inline Matrix outer(const Vector& u, const Vector& v) {
    Matrix r(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) r(i, j) = u[i] * v[j];
    return r;
}

inline bool all_finite(const Vector& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// norms
// ---------------------------------------------------------------------------

enum class Norm { l1, l2, linf, frobenius, spectral };

// defined in linsolve.hpp (largest singular value)
double spectral_norm(const Matrix& x);

inline double norm(const Vector& x, Norm kind = Norm::l2) {
    switch (kind) {
        case Norm::l1: {
            double s = 0.0;
            for (double v : x) s += std::fabs(v);
            return s;
        }
        case Norm::l2:
        case Norm::frobenius: {
            double s = 0.0;
            for (double v : x) s += v * v;
            return std::sqrt(s);
        }
        case Norm::linf: {
            double s = 0.0;
            for (double v : x) s = std::max(s, std::fabs(v));
            return s;
        }
        case Norm::spectral:
            throw InvalidKindError("norm: spectral norm requires a Matrix");
    }
    throw InvalidKindError("norm: unknown kind");
}

inline double norm(const Matrix& m, Norm kind = Norm::frobenius) {
    switch (kind) {
        case Norm::l1: {  // induced: max absolute column sum
            double best = 0.0;
            for (std::size_t j = 0; j < m.cols; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < m.rows; ++i) s += std::fabs(m(i, j));
                best = std::max(best, s);
            }
            return best;
        }
        case Norm::linf: {  // induced: max absolute row sum
            double best = 0.0;
            for (std::size_t i = 0; i < m.rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < m.cols; ++j) s += std::fabs(m(i, j));
                best = std::max(best, s);
            }
            return best;
        }
        case Norm::l2:
        case Norm::frobenius: {
            double s = 0.0;
            for (double v : m.a) s += v * v;
            return std::sqrt(s);
        }
        case Norm::spectral:
            return spectral_norm(m);
    }
    throw InvalidKindError("norm: unknown kind");
}

/// Entrywise max-abs difference, the workhorse of most test tolerances.
inline double max_abs_diff(const Vector& x, const Vector& y) {
    require_same_dim(x, y, "max_abs_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s = std::max(s, std::fabs(x[i] - y[i]));
    return s;
}

// ---------------------------------------------------------------------------
// set and prox descriptors
// ---------------------------------------------------------------------------

/// Constraint-set descriptor consumed by projections, projected solvers,
/// indicator proxes, and Frank-Wolfe LMOs.
struct SetSpec {
    enum class Kind { box, l2_ball, affine, orthogonal_cone, custom };

    Kind kind = Kind::custom;
    Vector lo, hi;                                   // box
    Vector center;                                   // l2_ball
    double radius = 0.0;                             // l2_ball
    Matrix A;                                        // affine Ax = b
    Vector b;
    double scale = 1.0;                              // orthogonal_cone singular value
    std::function<Vector(const Vector&)> projector;  // custom

    static SetSpec box(Vector lo, Vector hi) {
        require_same_dim(lo, hi, "SetSpec::box");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (lo[i] > hi[i])
                throw ParameterError("SetSpec::box: lo > hi at coordinate " + std::to_string(i));
        SetSpec s;
        s.kind = Kind::box;
        s.lo = std::move(lo);
        s.hi = std::move(hi);
        return s;
    }

    static SetSpec l2_ball(Vector center, double radius) {
        if (!(radius > 0.0)) throw ParameterError("SetSpec::l2_ball: radius must be positive");
        SetSpec s;
        s.kind = Kind::l2_ball;
        s.center = std::move(center);
        s.radius = radius;
        return s;
    }

    static SetSpec affine(Matrix A, Vector b) {
        if (A.rows != b.size()) throw DimensionError("SetSpec::affine: rows(A) != dim(b)");
        SetSpec s;
        s.kind = Kind::affine;
        s.A = std::move(A);
        s.b = std::move(b);
        return s;
    }

    static SetSpec orthogonal_cone(double lambda) {
        if (!(lambda > 0.0)) throw ParameterError("SetSpec::orthogonal_cone: scale must be positive");
        SetSpec s;
        s.kind = Kind::orthogonal_cone;
        s.scale = lambda;
        return s;
    }

    static SetSpec custom(std::function<Vector(const Vector&)> project_fn) {
        SetSpec s;
        s.kind = Kind::custom;
        s.projector = std::move(project_fn);
        return s;
    }
};

/// Non-smooth part descriptor for proximal solvers.
struct ProxSpec {
    enum class Kind { zero, l1, l2, indicator, custom };

    Kind kind = Kind::zero;
    double lambda = 0.0;
    std::optional<SetSpec> set;                            // indicator
    std::function<Vector(double, const Vector&)> prox_fn;  // custom, (lambda, x)

    static ProxSpec zero() { return ProxSpec{}; }

    static ProxSpec l1(double lambda) {
        if (lambda < 0.0) throw ParameterError("ProxSpec::l1: lambda must be nonnegative");
        ProxSpec p;
        p.kind = Kind::l1;
        p.lambda = lambda;
        return p;
    }

    static ProxSpec l2(double lambda) {
        if (lambda < 0.0) throw ParameterError("ProxSpec::l2: lambda must be nonnegative");
        ProxSpec p;
        p.kind = Kind::l2;
        p.lambda = lambda;
        return p;
    }

    static ProxSpec indicator(SetSpec s) {
        ProxSpec p;
        p.kind = Kind::indicator;
        p.set = std::move(s);
        return p;
    }

    static ProxSpec custom(std::function<Vector(double, const Vector&)> fn, double lambda = 1.0) {
        ProxSpec p;
        p.kind = Kind::custom;
        p.lambda = lambda;
        p.prox_fn = std::move(fn);
        return p;
    }

    /// Value of the non-smooth term where it has one in closed form
    /// (zero for indicator at feasible points; composite traces use this).
    double value(const Vector& x) const {
        switch (kind) {
            case Kind::zero:
            case Kind::indicator:
                return 0.0;
            case Kind::l1:
                return lambda * norm(x, Norm::l1);
            case Kind::l2:
                return lambda * norm(x, Norm::l2);
            case Kind::custom:
                return 0.0;
        }
        return 0.0;
    }
};

// ---------------------------------------------------------------------------
// oracle and problem
// ---------------------------------------------------------------------------

/// First-order/second-order access to an objective.  Optional members are
/// empty std::functions; solvers check for the capability they need and
/// raise CapabilityError otherwise.
struct Oracle {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<Matrix(const Vector&)> hessian;

    // finite-sum form: value(x) == (1/n) sum_i term_value(i, x)
    std::size_t term_count = 0;
    std::function<double(std::size_t, const Vector&)> term_value;
    std::function<Vector(std::size_t, const Vector&)> term_gradient;

    std::function<Vector(const Vector&)> subgradient;       // any member of the subdifferential
    std::function<Vector(double, const Vector&)> prox;      // prox_{lambda f}(x)
    std::function<Vector(const Vector&)> lmo;               // argmin_{y in S} g'y for gradient g
    std::function<Vector(const Vector&)> project;
};

struct AffineEq {
    Matrix A;
    Vector b;
};

struct Problem {
    Oracle oracle;
    std::vector<Oracle> ineq_constraints;  // y_i(x) <= 0
    std::optional<AffineEq> eq;            // Ax = b
    std::vector<SetSpec> sets;
    std::optional<double> L;               // smoothness constant
    std::optional<double> mu;              // strong-convexity constant
    std::size_t d = 0;

    // analytic-solution hooks used by benchmarks where a closed form exists
    std::optional<double> f_star;
    std::optional<Vector> x_star;

    std::size_t m1() const { return ineq_constraints.size(); }
    std::size_t m2() const { return eq ? eq->A.rows : 0; }
};

/// |value(x) - (1/n) sum term_value(i,x)|; zero when the oracle has no terms.
inline double finite_sum_residual(const Oracle& o, const Vector& x) {
    if (o.term_count == 0) return 0.0;
    if (!o.term_value) throw CapabilityError("finite_sum_residual: oracle lacks term_value");
    double s = 0.0;
    for (std::size_t i = 0; i < o.term_count; ++i) s += o.term_value(i, x);
    return std::fabs(o.value(x) - s / static_cast<double>(o.term_count));
}

// ---------------------------------------------------------------------------
// stopping and traces
// ---------------------------------------------------------------------------

/// Step-size schedules shared by the stochastic and subgradient solvers.
/// k is the 1-based update count: inv_k gives eta0/k, inv_sqrt_k eta0/sqrt(k).
enum class StepSchedule { constant, inv_k, inv_sqrt_k };

inline double schedule_eta(StepSchedule s, double eta0, long long k) {
    if (k < 1) throw ParameterError("schedule_eta: update count must be >= 1");
    switch (s) {
        case StepSchedule::inv_k: return eta0 / static_cast<double>(k);
        case StepSchedule::inv_sqrt_k: return eta0 / std::sqrt(static_cast<double>(k));
        default: return eta0;
    }
}

/// Tolerances of zero disable the corresponding criterion; max_iters of zero
/// means unbounded.  At least one criterion should be enabled.
struct StopRule {
    double grad_tol = 0.0;
    double f_change_tol = 0.0;
    double grad_change_tol = 0.0;
    long long max_iters = 0;

    bool any_enabled() const {
        return grad_tol > 0.0 || f_change_tol > 0.0 || grad_change_tol > 0.0 || max_iters > 0;
    }
};

struct TraceRecord {
    long long k = 0;
    double f = 0.0;
    std::optional<double> gnorm;
    double step = 0.0;
    std::map<std::string, double> extras;
    double t_ms = 0.0;
};

enum class StopReason { none, grad_tol, f_change, grad_change, max_iters };

inline StopReason stop_reason(const StopRule& rule, const TraceRecord& prev, const TraceRecord& curr) {
    if (curr.k <= prev.k) throw ParameterError("check_stop: curr.k must exceed prev.k");
    if (rule.grad_tol > 0.0 && curr.gnorm && *curr.gnorm <= rule.grad_tol)
        return StopReason::grad_tol;
    if (rule.f_change_tol > 0.0 && std::fabs(curr.f - prev.f) <= rule.f_change_tol)
        return StopReason::f_change;
    if (rule.grad_change_tol > 0.0 && curr.gnorm && prev.gnorm &&
        std::fabs(*curr.gnorm - *prev.gnorm) <= rule.grad_change_tol)
        return StopReason::grad_change;
    if (rule.max_iters > 0 && curr.k + 1 >= rule.max_iters) return StopReason::max_iters;
    return StopReason::none;
}

inline bool check_stop(const StopRule& rule, const TraceRecord& prev, const TraceRecord& curr) {
    return stop_reason(rule, prev, curr) != StopReason::none;
}

enum class Status { converged, iteration_limit, no_convergence, diverged, aborted };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::converged: return "converged";
        case Status::iteration_limit: return "iteration_limit";
        case Status::no_convergence: return "no_convergence";
        case Status::diverged: return "diverged";
        case Status::aborted: return "aborted";
    }
    return "unknown";
}

struct Report {
    Status status = Status::iteration_limit;
    Vector x;
    std::vector<TraceRecord> trace;
    std::map<std::string, Vector> aux;    // dual variables and other vector outputs
    std::map<std::string, double> stats;  // scalar summaries

    const TraceRecord& last() const {
        if (trace.empty()) throw Error("Report: empty trace");
        return trace.back();
    }
    double final_f() const { return last().f; }
};

/// Maps a tolerance-triggered stop to converged, an iteration cap to
/// iteration_limit.  Solvers with their own failure modes override.
inline Status status_from(StopReason r) {
    switch (r) {
        case StopReason::grad_tol:
        case StopReason::f_change:
        case StopReason::grad_change:
            return Status::converged;
        case StopReason::max_iters:
            return Status::iteration_limit;
        case StopReason::none:
            break;
    }
    return Status::iteration_limit;
}

/// Appends rec to the trace and evaluates the stop rule against the previous
/// record.  The first record can only trigger the gradient or iteration-cap
/// criteria since no change is measurable yet.
inline StopReason push_trace(Report& rep, const StopRule& rule, TraceRecord rec) {
    StopReason why = StopReason::none;
    if (!rep.trace.empty()) {
        why = stop_reason(rule, rep.trace.back(), rec);
    } else if (rule.grad_tol > 0.0 && rec.gnorm && *rec.gnorm <= rule.grad_tol) {
        why = StopReason::grad_tol;
    } else if (rule.max_iters > 0 && rec.k + 1 >= rule.max_iters) {
        why = StopReason::max_iters;
    }
    rep.trace.push_back(std::move(rec));
    return why;
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

/// Max over coordinates of |central difference - gradient_j| / (1 + |gradient_j|).
/// Central differences keep the error O(h^2), so the default h = 1e-5 leaves
/// plenty of slack under the 1e-5 acceptance threshold for smooth objectives.
inline double check_gradient(const Oracle& o, const Vector& x, double h = 1e-5) {
    if (!o.gradient) throw CapabilityError("check_gradient: oracle lacks a gradient");
    if (!(h > 0.0) || h > 1e-2) throw ParameterError("check_gradient: h must be in (0, 1e-2]");
    Vector g = o.gradient(x);
    require_same_dim(g, x, "check_gradient");
    double worst = 0.0;
    Vector xp = x, xm = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        double fp = o.value(xp);
        double fm = o.value(xm);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvaluationError("check_gradient: non-finite value near x at coordinate " +
                                  std::to_string(j));
        double diff = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::fabs(diff - g[j]) / (1.0 + std::fabs(diff)));
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return worst;
}

}  // namespace descentforge
