#pragma once
// Benchmark problem builders (regression and classification losses, lasso,
// quadratic programs, named toys with closed-form optima) and problem
// transformations: equality elimination onto the constraint null space,
// slack variables, and the epigraph form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/linsolve.hpp"
#include "descentforge/proximal.hpp"
#include "descentforge/rng.hpp"

namespace descentforge {

enum class LossKind { least_squares, absolute, hinge, logistic };

/// Row-wise dataset for (1/n) sum_i f_i(a_i' x, l_i) losses.
struct DatasetLS {
    Matrix a;
    Vector labels;
    LossKind loss = LossKind::least_squares;
};

inline void validate_dataset(const DatasetLS& data) {
    if (data.a.rows == 0 || data.a.cols == 0)
        throw DimensionError("dataset: design matrix must be nonempty");
    if (data.labels.size() != data.a.rows)
        throw DimensionError("dataset: one label per design row required");
    if (data.loss == LossKind::hinge || data.loss == LossKind::logistic)
        for (double l : data.labels)
            if (l != 1.0 && l != -1.0)
                throw ParameterError("dataset: hinge and logistic labels must be -1 or +1");
}

namespace detail {

inline double row_dot(const Matrix& a, std::size_t i, const Vector& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * x[j];
    return s;
}

inline Vector row_of(const Matrix& a, std::size_t i) {
    Vector r(a.cols);
    for (std::size_t j = 0; j < a.cols; ++j) r[j] = a(i, j);
    return r;
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline bool is_identity_matrix(const Matrix& m) {
    if (m.rows != m.cols) return false;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            if (m(i, j) != (i == j ? 1.0 : 0.0)) return false;
    return true;
}

inline void set_least_squares_solution(Problem& p, const Matrix& a, const Vector& l,
                                       const Matrix& ata) {
    try {
        Matrix chol = cholesky_factor(ata);
        p.x_star = cholesky_solve(chol, tmatvec(a, l));
        p.f_star = p.oracle.value(*p.x_star);
    } catch (const Error&) {
    }
}

}  // namespace detail

/// Finite-sum loss problem f(x) = (1/n) sum_i f_i(a_i' x, l_i).  Smooth
/// losses get gradients, Hessians, and an L estimate; the non-smooth ones
/// expose only subgradients so gradient solvers fail loudly.
inline Problem make_problem(const DatasetLS& data) {
    validate_dataset(data);
    const Matrix a = data.a;
    const Vector l = data.labels;
    const std::size_t n = a.rows;
    const double dn = static_cast<double>(n);

    Problem p;
    p.d = a.cols;
    p.oracle.term_count = n;

    switch (data.loss) {
        case LossKind::least_squares: {
            Matrix ata = matmul(transpose(a), a);
            Matrix hess = ata;
            for (double& v : hess.a) v /= dn;
            p.oracle.value = [a, l, dn](const Vector& x) {
                Vector r = sub(matvec(a, x), l);
                return 0.5 * dot(r, r) / dn;
            };
            p.oracle.gradient = [a, l, dn](const Vector& x) {
                Vector g = tmatvec(a, sub(matvec(a, x), l));
                for (double& v : g) v /= dn;
                return g;
            };
            p.oracle.hessian = [hess](const Vector&) { return hess; };
            p.oracle.term_value = [a, l](std::size_t i, const Vector& x) {
                double r = detail::row_dot(a, i, x) - l[i];
                return 0.5 * r * r;
            };
            p.oracle.term_gradient = [a, l](std::size_t i, const Vector& x) {
                double r = detail::row_dot(a, i, x) - l[i];
                return scaled(r, detail::row_of(a, i));
            };
            p.L = power_iteration_lmax(ata) / dn;
            detail::set_least_squares_solution(p, a, l, ata);
            break;
        }
        case LossKind::absolute: {
            p.oracle.value = [a, l, dn](const Vector& x) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.rows; ++i)
                    s += std::fabs(detail::row_dot(a, i, x) - l[i]);
                return s / dn;
            };
            p.oracle.subgradient = [a, l, dn](const Vector& x) {
                Vector g(a.cols, 0.0);
                for (std::size_t i = 0; i < a.rows; ++i) {
                    double s = detail::sign_of(detail::row_dot(a, i, x) - l[i]);
                    if (s != 0.0)
                        for (std::size_t j = 0; j < a.cols; ++j) g[j] += s * a(i, j);
                }
                for (double& v : g) v /= dn;
                return g;
            };
            p.oracle.term_value = [a, l](std::size_t i, const Vector& x) {
                return std::fabs(detail::row_dot(a, i, x) - l[i]);
            };
            break;
        }
        case LossKind::hinge: {
            p.oracle.value = [a, l, dn](const Vector& x) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.rows; ++i)
                    s += std::max(0.0, 1.0 - l[i] * detail::row_dot(a, i, x));
                return s / dn;
            };
            p.oracle.subgradient = [a, l, dn](const Vector& x) {
                Vector g(a.cols, 0.0);
                for (std::size_t i = 0; i < a.rows; ++i) {
                    if (1.0 - l[i] * detail::row_dot(a, i, x) <= 0.0) continue;
                    for (std::size_t j = 0; j < a.cols; ++j) g[j] -= l[i] * a(i, j);
                }
                for (double& v : g) v /= dn;
                return g;
            };
            p.oracle.term_value = [a, l](std::size_t i, const Vector& x) {
                return std::max(0.0, 1.0 - l[i] * detail::row_dot(a, i, x));
            };
            break;
        }
        case LossKind::logistic: {
            Matrix ata = matmul(transpose(a), a);
            p.oracle.value = [a, l, dn](const Vector& x) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.rows; ++i)
                    s += detail::softplus(-l[i] * detail::row_dot(a, i, x));
                return s / dn;
            };
            p.oracle.gradient = [a, l, dn](const Vector& x) {
                Vector g(a.cols, 0.0);
                for (std::size_t i = 0; i < a.rows; ++i) {
                    double w = -l[i] * detail::sigmoid(-l[i] * detail::row_dot(a, i, x));
                    for (std::size_t j = 0; j < a.cols; ++j) g[j] += w * a(i, j);
                }
                for (double& v : g) v /= dn;
                return g;
            };
            p.oracle.hessian = [a, l, dn](const Vector& x) {
                Matrix h(a.cols, a.cols);
                for (std::size_t i = 0; i < a.rows; ++i) {
                    double s = detail::sigmoid(-l[i] * detail::row_dot(a, i, x));
                    double w = s * (1.0 - s);
                    for (std::size_t r = 0; r < a.cols; ++r)
                        for (std::size_t c = 0; c < a.cols; ++c) h(r, c) += w * a(i, r) * a(i, c);
                }
                for (double& v : h.a) v /= dn;
                return h;
            };
            p.oracle.term_value = [a, l](std::size_t i, const Vector& x) {
                return detail::softplus(-l[i] * detail::row_dot(a, i, x));
            };
            p.oracle.term_gradient = [a, l](std::size_t i, const Vector& x) {
                double w = -l[i] * detail::sigmoid(-l[i] * detail::row_dot(a, i, x));
                return scaled(w, detail::row_of(a, i));
            };
            p.L = power_iteration_lmax(ata) / (4.0 * dn);
            break;
        }
    }
    return p;
}

/// Lasso as printed: 0.5 ||A x - l||^2 + lambda ||x||_1 (no 1/n).  The L
/// estimate covers the smooth half; identity designs carry the closed-form
/// soft-threshold solution.
inline Problem make_problem(const DatasetLS& data, double lambda) {
    if (data.loss != LossKind::least_squares)
        throw ParameterError("lasso: the quadratic half must be the least-squares loss");
    if (!(lambda >= 0.0)) throw ParameterError("lasso: lambda must be nonnegative");
    validate_dataset(data);
    const Matrix a = data.a;
    const Vector l = data.labels;

    Problem p;
    p.d = a.cols;
    p.oracle.value = [a, l, lambda](const Vector& x) {
        Vector r = sub(matvec(a, x), l);
        double s = 0.5 * dot(r, r);
        for (double v : x) s += lambda * std::fabs(v);
        return s;
    };
    p.oracle.subgradient = [a, l, lambda](const Vector& x) {
        Vector g = tmatvec(a, sub(matvec(a, x), l));
        for (std::size_t j = 0; j < x.size(); ++j) g[j] += lambda * detail::sign_of(x[j]);
        return g;
    };
    p.L = power_iteration_lmax(matmul(transpose(a), a));
    if (detail::is_identity_matrix(a)) {
        Vector star(l.size());
        for (std::size_t j = 0; j < l.size(); ++j) star[j] = soft_threshold(l[j], lambda);
        p.x_star = star;
        p.f_star = p.oracle.value(star);
    }
    return p;
}

/// The smooth half of the printed lasso, 0.5 ||A x - l||^2, as a standalone
/// problem for pairing with an l1 proximal term.
inline Problem lasso_smooth_problem(const DatasetLS& data) {
    if (data.loss != LossKind::least_squares)
        throw ParameterError("lasso_smooth_problem: least-squares data required");
    validate_dataset(data);
    const Matrix a = data.a;
    const Vector l = data.labels;
    Matrix ata = matmul(transpose(a), a);
    Problem p;
    p.d = a.cols;
    p.oracle.value = [a, l](const Vector& x) {
        Vector r = sub(matvec(a, x), l);
        return 0.5 * dot(r, r);
    };
    p.oracle.gradient = [a, l](const Vector& x) { return tmatvec(a, sub(matvec(a, x), l)); };
    p.oracle.hessian = [ata](const Vector&) { return ata; };
    p.L = power_iteration_lmax(ata);
    return p;
}

/// Closed-form coordinate minimizer of the printed lasso objective:
/// x_j <- s_{lambda/||a_j||^2}( a_j'(l - A x + a_j x_j) / ||a_j||^2 ).
inline std::function<double(std::size_t, const Vector&)> lasso_coordinate_solver(
    const DatasetLS& data, double lambda) {
    if (data.loss != LossKind::least_squares)
        throw ParameterError("lasso_coordinate_solver: least-squares data required");
    if (!(lambda >= 0.0)) throw ParameterError("lasso_coordinate_solver: lambda must be nonnegative");
    validate_dataset(data);
    const Matrix a = data.a;
    const Vector l = data.labels;
    Vector colsq(a.cols, 0.0);
    for (std::size_t j = 0; j < a.cols; ++j)
        for (std::size_t i = 0; i < a.rows; ++i) colsq[j] += a(i, j) * a(i, j);
    return [a, l, lambda, colsq](std::size_t j, const Vector& x) {
        if (colsq[j] == 0.0) return 0.0;
        double t = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) {
            double partial = detail::row_dot(a, i, x) - a(i, j) * x[j];
            t += a(i, j) * (l[i] - partial);
        }
        return soft_threshold(t / colsq[j], lambda / colsq[j]);
    };
}

/// Quadratic program 0.5 x'Px + q'x + r with optional affine inequalities
/// G x <= h and equalities.
struct QpSpec {
    Matrix p;
    Vector q;
    double r = 0.0;
    Matrix g;
    Vector h;
    std::optional<AffineEq> eq;
};

inline Problem make_problem(const QpSpec& spec) {
    if (spec.p.rows != spec.p.cols) throw DimensionError("qp: P must be square");
    if (spec.q.size() != spec.p.rows) throw DimensionError("qp: q must match P");
    double scale = norm(spec.p, Norm::linf);
    for (std::size_t i = 0; i < spec.p.rows; ++i)
        for (std::size_t j = i + 1; j < spec.p.cols; ++j)
            if (std::fabs(spec.p(i, j) - spec.p(j, i)) > 1e-12 * (1.0 + scale))
                throw ParameterError("qp: P must be symmetric");
    if (spec.g.rows != spec.h.size()) throw DimensionError("qp: one bound per inequality row");
    if (spec.g.rows > 0 && spec.g.cols != spec.p.rows)
        throw DimensionError("qp: G must match the variable dimension");
    if (spec.eq && spec.eq->A.cols != spec.p.rows)
        throw DimensionError("qp: equality rows must match the variable dimension");

    const Matrix p = spec.p;
    const Vector q = spec.q;
    const double r0 = spec.r;
    Problem prob;
    prob.d = p.rows;
    prob.oracle.value = [p, q, r0](const Vector& x) {
        return 0.5 * dot(x, matvec(p, x)) + dot(q, x) + r0;
    };
    prob.oracle.gradient = [p, q](const Vector& x) {
        Vector g = matvec(p, x);
        axpy(1.0, q, g);
        return g;
    };
    prob.oracle.hessian = [p](const Vector&) { return p; };
    for (std::size_t i = 0; i < spec.g.rows; ++i) {
        Vector gi = detail::row_of(spec.g, i);
        double hi = spec.h[i];
        std::size_t d = p.rows;
        Oracle yi;
        yi.value = [gi, hi](const Vector& x) { return dot(gi, x) - hi; };
        yi.gradient = [gi](const Vector&) { return gi; };
        yi.hessian = [d](const Vector&) { return Matrix(d, d); };
        prob.ineq_constraints.push_back(std::move(yi));
    }
    prob.eq = spec.eq;
    prob.L = power_iteration_lmax(p);
    try {
        EigResult e = eig_sym(p);
        double lmin = e.values.back();
        if (lmin > 0.0) prob.mu = lmin;
    } catch (const Error&) {
    }
    if (spec.g.rows == 0 && !spec.eq) {
        try {
            Vector star = solve_linear(p, scaled(-1.0, q), SolveMethod::auto_pick);
            prob.f_star = prob.oracle.value(star);
            prob.x_star = star;
        } catch (const Error&) {
        }
    }
    return prob;
}

/// Canonical instances with pinned analytic optima:
///   "barrier_1d"        min x s.t. x >= 1            (x* = 1)
///   "consensus_average" (1/5) sum 0.5 (x - i)^2      (x* = 3)
///   "orthonormal_lasso" identity-design lasso         (x* = s_0.7(y))
inline Problem make_toy(const std::string& name) {
    if (name == "barrier_1d") {
        Problem p;
        p.d = 1;
        p.oracle.value = [](const Vector& x) { return x[0]; };
        p.oracle.gradient = [](const Vector&) { return Vector{1.0}; };
        p.oracle.hessian = [](const Vector&) { return Matrix(1, 1); };
        Oracle y;
        y.value = [](const Vector& x) { return 1.0 - x[0]; };
        y.gradient = [](const Vector&) { return Vector{-1.0}; };
        y.hessian = [](const Vector&) { return Matrix(1, 1); };
        p.ineq_constraints = {y};
        p.x_star = Vector{1.0};
        p.f_star = 1.0;
        return p;
    }
    if (name == "consensus_average") {
        Matrix a(5, 1);
        Vector l(5);
        for (std::size_t i = 0; i < 5; ++i) {
            a(i, 0) = 1.0;
            l[i] = static_cast<double>(i + 1);
        }
        DatasetLS data{a, l, LossKind::least_squares};
        Problem p = make_problem(data);
        p.mu = *p.L;
        return p;
    }
    if (name == "orthonormal_lasso") {
        Vector y{3.0, -1.0, 0.2, 5.0, -0.05};
        DatasetLS data{identity(5), y, LossKind::least_squares};
        return make_problem(data, 0.7);
    }
    throw InvalidKindError("make_toy: unknown toy '" + name + "'");
}

/// Reduced problem over the null-space coordinates u with x = particular +
/// basis u; lift maps u back to the original variables.
struct ReducedProblem {
    Problem problem;
    std::function<Vector(const Vector&)> lift;
    Matrix basis;
    Vector particular;
};

namespace detail {

/// Orthonormal completion: columns orthogonal to the given orthonormal set,
/// drawn deterministically from the standard basis.
inline Matrix null_space_completion(const Matrix& v_range, std::size_t d, std::size_t want) {
    Matrix out(d, want);
    std::size_t found = 0;
    std::vector<Vector> held;
    held.reserve(v_range.cols + want);
    for (std::size_t j = 0; j < v_range.cols; ++j) {
        Vector c(d);
        for (std::size_t i = 0; i < d; ++i) c[i] = v_range(i, j);
        held.push_back(std::move(c));
    }
    for (std::size_t e = 0; e < d && found < want; ++e) {
        Vector cand(d, 0.0);
        cand[e] = 1.0;
        for (const Vector& h : held) axpy(-dot(h, cand), h, cand);
        double nv = norm(cand, Norm::l2);
        if (nv <= 1e-10) continue;
        for (double& t : cand) t /= nv;
        for (const Vector& h : held) axpy(-dot(h, cand), h, cand);
        nv = norm(cand, Norm::l2);
        if (nv <= 1e-10) continue;
        for (double& t : cand) t /= nv;
        for (std::size_t i = 0; i < d; ++i) out(i, found) = cand[i];
        held.push_back(cand);
        ++found;
    }
    if (found != want)
        throw RankError("eliminate_equality: failed to complete the null-space basis");
    return out;
}

inline Oracle compose_affine(const Oracle& f, const Matrix& basis, const Vector& particular) {
    Oracle o;
    auto lift_point = [basis, particular](const Vector& u) {
        Vector x = particular;
        axpy(1.0, matvec(basis, u), x);
        return x;
    };
    if (f.value) o.value = [f, lift_point](const Vector& u) { return f.value(lift_point(u)); };
    if (f.gradient)
        o.gradient = [f, basis, lift_point](const Vector& u) {
            return tmatvec(basis, f.gradient(lift_point(u)));
        };
    if (f.subgradient)
        o.subgradient = [f, basis, lift_point](const Vector& u) {
            return tmatvec(basis, f.subgradient(lift_point(u)));
        };
    if (f.hessian)
        o.hessian = [f, basis, lift_point](const Vector& u) {
            return matmul(transpose(basis), matmul(f.hessian(lift_point(u)), basis));
        };
    return o;
}

}  // namespace detail

/// Eliminates A x = b by the pseudo-inverse particular solution plus an
/// orthonormal null-space basis from the SVD, leaving an unconstrained
/// problem over d - m coordinates.
inline ReducedProblem eliminate_equality(const Problem& problem) {
    ReducedProblem out;
    std::size_t d = problem.d;
    if (!problem.eq || problem.eq->A.rows == 0) {
        out.problem = problem;
        out.problem.eq.reset();
        out.basis = identity(d);
        out.particular = Vector(d, 0.0);
        out.lift = [](const Vector& u) { return u; };
        return out;
    }
    const Matrix& a = problem.eq->A;
    const Vector& b = problem.eq->b;
    std::size_t m = a.rows;
    if (a.cols != d) throw DimensionError("eliminate_equality: A must match the dimension");
    if (m >= d)
        throw ParameterError("eliminate_equality: need fewer equality rows than variables");
    SvdResult dec = svd(a);
    if (!(dec.s[m - 1] > 1e-12 * std::max(dec.s[0], 1.0)))
        throw RankError("eliminate_equality: A is rank deficient");

    // min-norm particular solution V S^-1 U' b
    Vector ub = tmatvec(dec.u, b);
    for (std::size_t i = 0; i < m; ++i) ub[i] /= dec.s[i];
    Vector particular = matvec(dec.v, ub);
    Matrix basis = detail::null_space_completion(dec.v, d, d - m);

    out.basis = basis;
    out.particular = particular;
    out.lift = [basis, particular](const Vector& u) {
        Vector x = particular;
        axpy(1.0, matvec(basis, u), x);
        return x;
    };
    out.problem.d = d - m;
    out.problem.oracle = detail::compose_affine(problem.oracle, basis, particular);
    for (const Oracle& yi : problem.ineq_constraints)
        out.problem.ineq_constraints.push_back(detail::compose_affine(yi, basis, particular));
    out.problem.L = problem.L;
    out.problem.mu = problem.mu;
    out.problem.f_star = problem.f_star;
    return out;
}

/// Problem over (x, xi) with y_i(x) + xi_i = 0 and xi >= 0; embed maps a
/// point x to the witness (x, -y(x)).
struct SlackProblem {
    Problem problem;
    std::function<Vector(const Vector&)> embed;
};

/// Turns affine inequalities into equalities with nonnegative slacks.  The
/// inequality oracles must be affine (checked at probe points) because the
/// new equality rows join the problem's affine equality block.
inline SlackProblem add_slack(const Problem& problem) {
    SlackProblem out;
    std::size_t d = problem.d;
    std::size_t m1 = problem.m1();
    if (m1 == 0) {
        out.problem = problem;
        out.embed = [](const Vector& x) { return x; };
        return out;
    }

    std::vector<Vector> grads(m1);
    Vector offsets(m1);
    Vector zero(d, 0.0);
    Vector probe1(d, 1.0);
    Vector probe2(d);
    for (std::size_t j = 0; j < d; ++j) probe2[j] = 0.5 + 0.25 * static_cast<double>(j % 7);
    for (std::size_t i = 0; i < m1; ++i) {
        const Oracle& yi = problem.ineq_constraints[i];
        if (!yi.value || !yi.gradient)
            throw CapabilityError("add_slack: inequality oracles need value and gradient");
        grads[i] = yi.gradient(zero);
        offsets[i] = yi.value(zero);
        for (const Vector& probe : {probe1, probe2}) {
            double affine = offsets[i] + dot(grads[i], probe);
            if (std::fabs(yi.value(probe) - affine) > 1e-8 * (1.0 + std::fabs(affine)))
                throw InvalidKindError("add_slack: inequality " + std::to_string(i) +
                                       " is not affine");
        }
    }

    std::size_t dz = d + m1;
    std::size_t m_old = problem.eq ? problem.eq->A.rows : 0;
    Matrix a_new(m_old + m1, dz);
    Vector b_new(m_old + m1);
    for (std::size_t i = 0; i < m_old; ++i) {
        for (std::size_t j = 0; j < d; ++j) a_new(i, j) = problem.eq->A(i, j);
        b_new[i] = problem.eq->b[i];
    }
    for (std::size_t i = 0; i < m1; ++i) {
        for (std::size_t j = 0; j < d; ++j) a_new(m_old + i, j) = grads[i][j];
        a_new(m_old + i, d + i) = 1.0;
        b_new[m_old + i] = -offsets[i];
    }

    const Oracle& f = problem.oracle;
    Oracle lifted;
    auto head = [d](const Vector& z) { return Vector(z.begin(), z.begin() + static_cast<long>(d)); };
    if (f.value) lifted.value = [f, head](const Vector& z) { return f.value(head(z)); };
    if (f.gradient)
        lifted.gradient = [f, head](const Vector& z) {
            Vector g = f.gradient(head(z));
            g.resize(z.size(), 0.0);
            return g;
        };
    if (f.hessian)
        lifted.hessian = [f, head, d](const Vector& z) {
            Matrix h = f.hessian(head(z));
            Matrix hz(z.size(), z.size());
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) hz(i, j) = h(i, j);
            return hz;
        };

    out.problem.d = dz;
    out.problem.oracle = std::move(lifted);
    out.problem.eq = AffineEq{std::move(a_new), std::move(b_new)};
    for (std::size_t i = 0; i < m1; ++i) {
        std::size_t slot = d + i;
        Oracle nonneg;
        nonneg.value = [slot](const Vector& z) { return -z[slot]; };
        nonneg.gradient = [slot, dz](const Vector&) {
            Vector g(dz, 0.0);
            g[slot] = -1.0;
            return g;
        };
        nonneg.hessian = [dz](const Vector&) { return Matrix(dz, dz); };
        out.problem.ineq_constraints.push_back(std::move(nonneg));
    }
    out.problem.f_star = problem.f_star;

    std::vector<Oracle> ys = problem.ineq_constraints;
    out.embed = [ys, d, m1](const Vector& x) {
        Vector z = x;
        z.resize(d + m1);
        for (std::size_t i = 0; i < m1; ++i) z[d + i] = -ys[i].value(x);
        return z;
    };
    return out;
}

/// Epigraph form over (x, t): minimize t subject to f(x) - t <= 0 plus the
/// original constraints.
inline Problem epigraph_form(const Problem& problem) {
    std::size_t d = problem.d;
    std::size_t dz = d + 1;
    Problem out;
    out.d = dz;
    out.oracle.value = [d](const Vector& z) { return z[d]; };
    out.oracle.gradient = [d, dz](const Vector&) {
        Vector g(dz, 0.0);
        g[d] = 1.0;
        return g;
    };
    out.oracle.hessian = [dz](const Vector&) { return Matrix(dz, dz); };

    auto head = [d](const Vector& z) { return Vector(z.begin(), z.begin() + static_cast<long>(d)); };
    const Oracle& f = problem.oracle;
    Oracle epi;
    epi.value = [f, head, d](const Vector& z) { return f.value(head(z)) - z[d]; };
    if (f.gradient)
        epi.gradient = [f, head, d, dz](const Vector& z) {
            Vector g = f.gradient(head(z));
            g.resize(dz, 0.0);
            g[d] = -1.0;
            return g;
        };
    if (f.hessian)
        epi.hessian = [f, head, d, dz](const Vector& z) {
            Matrix h = f.hessian(head(z));
            Matrix hz(dz, dz);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) hz(i, j) = h(i, j);
            return hz;
        };
    out.ineq_constraints.push_back(std::move(epi));

    for (const Oracle& yi : problem.ineq_constraints) {
        Oracle lifted;
        if (yi.value) lifted.value = [yi, head](const Vector& z) { return yi.value(head(z)); };
        if (yi.gradient)
            lifted.gradient = [yi, head, dz](const Vector& z) {
                Vector g = yi.gradient(head(z));
                g.resize(dz, 0.0);
                return g;
            };
        if (yi.hessian)
            lifted.hessian = [yi, head, d, dz](const Vector& z) {
                Matrix h = yi.hessian(head(z));
                Matrix hz(dz, dz);
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) hz(i, j) = h(i, j);
                return hz;
            };
        out.ineq_constraints.push_back(std::move(lifted));
    }
    if (problem.eq) {
        Matrix a(problem.eq->A.rows, dz);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < d; ++j) a(i, j) = problem.eq->A(i, j);
        out.eq = AffineEq{std::move(a), problem.eq->b};
    }
    out.f_star = problem.f_star;
    return out;
}

/// CSV with a header row; the column named "label" holds labels and every
/// other column is a feature, in file order.
inline DatasetLS load_csv(const std::string& path,
                          LossKind loss = LossKind::least_squares) {
    std::ifstream in(path);
    if (!in) throw EvaluationError("load_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw EvaluationError("load_csv: empty file '" + path + "'");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.push_back("");
        return cells;
    };
    std::vector<std::string> header = split(line);
    std::size_t label_col = header.size();
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == "label") label_col = j;
    if (label_col == header.size())
        throw ParameterError("load_csv: no column named 'label' in '" + path + "'");

    std::vector<Vector> rows;
    Vector labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split(line);
        if (cells.size() != header.size())
            throw DimensionError("load_csv: row width mismatch in '" + path + "'");
        Vector row;
        row.reserve(header.size() - 1);
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v;
            try {
                v = std::stod(cells[j]);
            } catch (const std::exception&) {
                throw EvaluationError("load_csv: non-numeric cell '" + cells[j] + "'");
            }
            if (j == label_col)
                labels.push_back(v);
            else
                row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EvaluationError("load_csv: no data rows in '" + path + "'");
    Matrix a(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) a(i, j) = rows[i][j];
    DatasetLS data{std::move(a), std::move(labels), loss};
    validate_dataset(data);
    return data;
}

/// Deterministic synthetic dataset: standard-normal design, planted
/// coefficients, light label noise; classification losses get sign labels.
inline DatasetLS make_dataset(LossKind loss, std::uint64_t seed, std::size_t n, std::size_t d) {
    if (n == 0 || d == 0) throw DimensionError("make_dataset: n and d must be positive");
    Rng rng(seed, "dataset");
    Matrix a(n, d);
    for (double& v : a.a) v = rng.normal();
    Vector planted(d);
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : planted) v = scale * rng.normal();
    Vector labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double signal = detail::row_dot(a, i, planted) + 0.1 * rng.normal();
        if (loss == LossKind::hinge || loss == LossKind::logistic)
            labels[i] = signal >= 0.0 ? 1.0 : -1.0;
        else
            labels[i] = signal;
    }
    return DatasetLS{std::move(a), std::move(labels), loss};
}

}  // namespace descentforge
