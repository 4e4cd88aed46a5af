#pragma once

#include "descentforge/core.hpp"
#include "descentforge/linsolve.hpp"
#include "descentforge/rng.hpp"

namespace dftest {

using descentforge::Matrix;
using descentforge::Problem;
using descentforge::Rng;
using descentforge::Vector;

inline Vector random_vector(Rng& rng, std::size_t d) {
    Vector v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline Matrix random_spd(Rng& rng, std::size_t d, double shift = 0.5) {
    Matrix b(d, d);
    for (auto& v : b.a) v = rng.normal();
    Matrix m = descentforge::matmul(descentforge::transpose(b), b);
    for (std::size_t i = 0; i < d; ++i) m(i, i) += shift;
    return m;
}

// SPD with an exact prescribed spectrum: Q diag(lambda) Q' with Q the
// eigenbasis of a random symmetric matrix.  lambda[0] = lmax, last = lmin,
// the rest uniform in between, so L and mu are known exactly.
inline Matrix spd_with_spectrum(Rng& rng, std::size_t d, double lmin, double lmax) {
    Matrix s(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) s(i, j) = s(j, i) = rng.normal();
    Matrix q = descentforge::eig_sym(s).q;
    Vector lambda(d);
    for (std::size_t i = 0; i < d; ++i) lambda[i] = rng.uniform(lmin, lmax);
    lambda[0] = lmax;
    if (d > 1) lambda[d - 1] = lmin;
    Matrix m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) m(i, j) += q(i, k) * lambda[k] * q(j, k);
    return m;
}

// f(x) = 0.5 x'Ax - b'x with value/gradient/hessian oracle and the exact
// minimizer, minimum, and curvature constants filled in.
inline Problem quadratic_problem(const Matrix& a, const Vector& b, double lmax, double lmin) {
    Problem p;
    p.d = b.size();
    p.oracle.value = [a, b](const Vector& x) {
        return 0.5 * descentforge::dot(x, descentforge::matvec(a, x)) - descentforge::dot(b, x);
    };
    p.oracle.gradient = [a, b](const Vector& x) {
        return descentforge::sub(descentforge::matvec(a, x), b);
    };
    p.oracle.hessian = [a](const Vector&) { return a; };
    p.L = lmax;
    p.mu = lmin;
    Vector xs = descentforge::solve_linear(a, b);
    p.f_star = 0.5 * descentforge::dot(xs, descentforge::matvec(a, xs)) - descentforge::dot(b, xs);
    p.x_star = xs;
    return p;
}

inline Problem random_quadratic_problem(Rng& rng, std::size_t d, double lmin, double lmax) {
    Matrix a = spd_with_spectrum(rng, d, lmin, lmax);
    Vector b = random_vector(rng, d);
    return quadratic_problem(a, b, lmax, lmin);
}

}  // namespace dftest
