#pragma once

#include <cmath>
#include <limits>

#include "descentforge/core.hpp"

namespace descentforge {

struct LineSearchResult {
    double eta = 0.0;
    int evals = 0;       // objective evaluations at trial points
    bool satisfied = false;
};

/// Step-size floor solvers fall back to when a search reports failure.
inline constexpr double kLineSearchFloor = 1e-16;

/// Largest eta = eta0 / 2^k (k <= max_halvings) with f(x + eta*p) < f(x).
/// Non-finite trial values count as failures and halving continues.
inline LineSearchResult halving_search(const Oracle& oracle, const Vector& x, const Vector& p,
                                       double eta0, int max_halvings = 60) {
    if (!(eta0 > 0.0)) throw ParameterError("halving_search: eta0 must be positive");
    double fx = oracle.value(x);
    double eta = eta0;
    LineSearchResult r;
    for (int k = 0; k <= max_halvings; ++k) {
        Vector trial = x;
        axpy(eta, p, trial);
        double ft = oracle.value(trial);
        ++r.evals;
        if (std::isfinite(ft) && ft < fx) {
            r.eta = eta;
            r.satisfied = true;
            return r;
        }
        eta *= 0.5;
    }
    r.eta = kLineSearchFloor;
    r.satisfied = false;
    return r;
}

/// Backtracking until f(x + eta*p) <= f(x) + c * eta * grad f(x)'p.
inline LineSearchResult armijo_backtracking(const Oracle& oracle, const Vector& x, const Vector& p,
                                            double eta0, double c = 1e-4, double shrink = 0.5) {
    if (!(eta0 > 0.0)) throw ParameterError("armijo_backtracking: eta0 must be positive");
    if (!(c > 0.0) || c > 0.5) throw ParameterError("armijo_backtracking: c must be in (0, 0.5]");
    if (!(shrink > 0.0) || !(shrink < 1.0))
        throw ParameterError("armijo_backtracking: shrink must be in (0, 1)");
    if (!oracle.gradient) throw CapabilityError("armijo_backtracking: oracle lacks a gradient");

    double slope = dot(oracle.gradient(x), p);
    if (slope >= 0.0)
        throw ParameterError("armijo_backtracking: p is not a descent direction (grad'p >= 0)");
    double fx = oracle.value(x);
    double eta = eta0;
    LineSearchResult r;
    for (int k = 0; k < 200; ++k) {
        Vector trial = x;
        axpy(eta, p, trial);
        double ft = oracle.value(trial);
        ++r.evals;
        if (std::isfinite(ft) && ft <= fx + c * eta * slope) {
            r.eta = eta;
            r.satisfied = true;
            return r;
        }
        eta *= shrink;
    }
    r.eta = eta;
    r.satisfied = false;
    return r;
}

/// Bracket-then-bisect search for a step satisfying the (strong) Wolfe
/// conditions: sufficient decrease plus curvature
///   -p'grad f(x + eta*p) <= -c2 * p'grad f(x)
/// (absolute values on both slopes when strong).  The bracket grows by
/// factor 2 until the curvature side is trapped, then bisects.
inline LineSearchResult wolfe_search(const Oracle& oracle, const Vector& x, const Vector& p,
                                     double c1 = 1e-4, double c2 = 0.9, bool strong = false) {
    if (!(c1 > 0.0) || !(c1 < c2) || !(c2 < 1.0))
        throw ParameterError("wolfe_search: require 0 < c1 < c2 < 1");
    if (!oracle.gradient) throw CapabilityError("wolfe_search: oracle lacks a gradient");

    double slope0 = dot(oracle.gradient(x), p);
    if (slope0 >= 0.0)
        throw ParameterError("wolfe_search: p is not a descent direction (grad'p >= 0)");
    double fx = oracle.value(x);

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double eta = 1.0;
    double best = 0.0;  // last eta seen satisfying sufficient decrease
    LineSearchResult r;
    for (int it = 0; it < 100; ++it) {
        Vector trial = x;
        axpy(eta, p, trial);
        double ft = oracle.value(trial);
        ++r.evals;
        if (!std::isfinite(ft) || ft > fx + c1 * eta * slope0) {
            hi = eta;  // too long
        } else {
            double slope = dot(oracle.gradient(trial), p);
            bool curvature_ok =
                strong ? std::fabs(slope) <= c2 * std::fabs(slope0) : slope >= c2 * slope0;
            if (curvature_ok) {
                r.eta = eta;
                r.satisfied = true;
                return r;
            }
            best = eta;
            if (slope < c2 * slope0) {
                lo = eta;  // still descending steeply: too short
            } else {
                hi = eta;  // strong case, positive slope beyond the valley
            }
        }
        eta = std::isinf(hi) ? 2.0 * eta : 0.5 * (lo + hi);
        if (hi - lo < 1e-18 && !std::isinf(hi)) break;
    }
    r.eta = best > 0.0 ? best : eta;
    r.satisfied = false;
    return r;
}

/// Algorithm: midpoint bisection on a derivative with df(l) < 0 <= df(u).
inline double bisection_min(const std::function<double(double)>& df, double l, double u,
                            double tol = 1e-10) {
    if (!(tol > 0.0)) throw ParameterError("bisection_min: tol must be positive");
    if (l > u) throw ParameterError("bisection_min: l > u");
    if (l == u) return l;
    if (!(df(l) < 0.0) || df(u) < 0.0)
        throw BracketError("bisection_min: need df(l) < 0 <= df(u)");
    while (u - l > tol) {
        double x = 0.5 * (l + u);
        if (df(x) < 0.0)
            l = x;
        else
            u = x;
    }
    return 0.5 * (l + u);
}

}  // namespace descentforge
