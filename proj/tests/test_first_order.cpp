#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "descentforge/first_order.hpp"
#include "descentforge/rng.hpp"
#include "helpers.hpp"

using namespace descentforge;
using dftest::quadratic_problem;
using dftest::random_quadratic_problem;
using dftest::random_vector;

namespace {

Problem half_square_1d() {
    Problem p;
    p.d = 1;
    p.oracle.value = [](const Vector& x) { return 0.5 * x[0] * x[0]; };
    p.oracle.gradient = [](const Vector& x) { return Vector{x[0]}; };
    p.oracle.hessian = [](const Vector&) {
        Matrix h(1, 1);
        h(0, 0) = 1.0;
        return h;
    };
    p.L = 1.0;
    p.f_star = 0.0;
    return p;
}

long long iters_to_gap(const Report& rep, double f_star, double tol) {
    for (const auto& rec : rep.trace)
        if (rec.f - f_star <= tol) return rec.k;
    return -1;
}

}  // namespace

TEST_CASE("fixed step on a 1-d quadratic halves the iterate") {
    GDConfig cfg;
    cfg.step_rule = fixed_step(0.5);
    cfg.stop.max_iters = 5;
    Report rep = gradient_descent(half_square_1d(), cfg, {1.0});

    REQUIRE(rep.trace.size() == 5);
    // iterates 1, 0.5, 0.25, 0.125, 0.0625
    double xk = 1.0;
    for (std::size_t k = 0; k < rep.trace.size(); ++k) {
        CHECK(rep.trace[k].f == 0.5 * xk * xk);
        CHECK(rep.trace[k].step == (k == 0 ? 0.0 : 0.5));
        xk *= 0.5;
    }
    CHECK(rep.x[0] == 0.0625);
    CHECK(rep.status == Status::iteration_limit);
}

TEST_CASE("gradient tolerance stop reports converged") {
    GDConfig cfg;
    cfg.step_rule = fixed_step(0.5);
    cfg.stop.grad_tol = 1e-6;
    cfg.stop.max_iters = 200;
    Report rep = gradient_descent(half_square_1d(), cfg, {1.0});
    CHECK(rep.status == Status::converged);
    CHECK(std::fabs(rep.x[0]) <= 1e-6);
}

TEST_CASE("momentum recursion matches the hand recursion") {
    Rng rng(7, "momentum");
    Problem p = random_quadratic_problem(rng, 4, 1.0, 6.0);
    const double alpha = 0.5;
    const double eta = 0.1;

    GDConfig cfg;
    cfg.step_rule = fixed_step(eta);
    cfg.momentum_alpha = alpha;
    cfg.stop.max_iters = 8;
    Vector x0 = random_vector(rng, 4);
    Report rep = gradient_descent(p, cfg, x0);

    Vector x = x0, dx(4, 0.0);
    for (std::size_t k = 0; k < rep.trace.size(); ++k) {
        CHECK(rep.trace[k].f == Catch::Approx(p.oracle.value(x)).margin(1e-14));
        Vector g = p.oracle.gradient(x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            dx[i] = alpha * dx[i] - eta * g[i];
            x[i] += dx[i];
        }
    }
}

TEST_CASE("zero momentum reproduces plain descent exactly") {
    Rng rng(11, "alpha0");
    Problem p = random_quadratic_problem(rng, 6, 1.0, 8.0);
    Vector x0 = random_vector(rng, 6);

    GDConfig plain;
    plain.step_rule = auto_step();
    plain.stop.max_iters = 40;
    GDConfig with_zero = plain;
    with_zero.momentum_alpha = 0.0;

    Report a = gradient_descent(p, plain, x0);
    Report b = gradient_descent(p, with_zero, x0);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(*a.trace[k].gnorm == *b.trace[k].gnorm);
        CHECK(a.trace[k].step == b.trace[k].step);
    }
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("steepest descent reproduces the analytic quadratic step") {
    Rng rng(23, "steepest");
    Matrix a = dftest::spd_with_spectrum(rng, 6, 1.0, 10.0);
    Vector b = random_vector(rng, 6);
    Problem p = quadratic_problem(a, b, 10.0, 1.0);

    GDConfig cfg;
    cfg.step_rule = exact_1d_step();
    cfg.stop.max_iters = 8;
    Vector x0 = random_vector(rng, 6);
    Report rep = gradient_descent(p, cfg, x0);
    REQUIRE(rep.trace.size() == 8);

    Vector x = x0;
    for (std::size_t k = 0; k + 1 < rep.trace.size(); ++k) {
        Vector r = sub(b, matvec(a, x));  // residual = -gradient
        double eta_star = dot(r, r) / dot(r, matvec(a, r));
        CHECK(rep.trace[k + 1].step == Catch::Approx(eta_star).epsilon(1e-8));
        axpy(eta_star, r, x);
        CHECK(rep.trace[k + 1].f ==
              Catch::Approx(p.oracle.value(x)).margin(1e-12 * (1.0 + std::fabs(rep.trace[k + 1].f))));
    }
}

TEST_CASE("automatic fixed step derives one over L") {
    SECTION("from the problem's smoothness constant") {
        Problem p = half_square_1d();
        p.L = 4.0;
        GDConfig cfg;
        cfg.step_rule = auto_step();
        cfg.stop.max_iters = 3;
        Report rep = gradient_descent(p, cfg, {1.0});
        CHECK(rep.trace[1].step == 0.25);
    }
    SECTION("from the Hessian by power iteration") {
        Problem p;
        p.d = 2;
        Matrix h(2, 2);
        h(0, 0) = 2.0;
        h(1, 1) = 8.0;
        p.oracle.value = [](const Vector& x) { return x[0] * x[0] + 4.0 * x[1] * x[1]; };
        p.oracle.gradient = [](const Vector& x) { return Vector{2.0 * x[0], 8.0 * x[1]}; };
        p.oracle.hessian = [h](const Vector&) { return h; };
        GDConfig cfg;
        cfg.step_rule = auto_step();
        cfg.stop.max_iters = 3;
        Report rep = gradient_descent(p, cfg, {1.0, 1.0});
        CHECK(rep.trace[1].step == Catch::Approx(0.125));
    }
    SECTION("no source of L raises CapabilityError") {
        Problem p;
        p.d = 1;
        p.oracle.value = [](const Vector& x) { return 0.5 * x[0] * x[0]; };
        p.oracle.gradient = [](const Vector& x) { return Vector{x[0]}; };
        GDConfig cfg;
        cfg.step_rule = auto_step();
        cfg.stop.max_iters = 3;
        CHECK_THROWS_AS(gradient_descent(p, cfg, {1.0}), CapabilityError);
    }
}

TEST_CASE("line-searched step rules minimize a convex quadratic") {
    Rng rng(41, "ls_rules");
    Problem p = random_quadratic_problem(rng, 8, 1.0, 20.0);
    Vector x0 = random_vector(rng, 8);

    // The value-comparison searches stall once the per-step decrease falls
    // below double rounding at |f*| ~ 1, around gnorm 1e-7, so the tolerance
    // stays above that floor.
    auto solve_with = [&](StepRule rule) {
        GDConfig cfg;
        cfg.step_rule = rule;
        cfg.stop.grad_tol = 1e-6;
        cfg.stop.max_iters = 5000;
        return gradient_descent(p, cfg, x0);
    };
    for (StepRule rule : {halving_step(), armijo_step(), wolfe_step()}) {
        Report rep = solve_with(rule);
        CHECK(rep.status == Status::converged);
        CHECK(max_abs_diff(rep.x, *p.x_star) <= 2e-6);
    }
}

TEST_CASE("divergence yields diverged status and the last finite iterate") {
    Problem p;
    p.d = 1;
    p.oracle.value = [](const Vector& x) { return -std::exp(x[0]); };
    p.oracle.gradient = [](const Vector& x) { return Vector{-std::exp(x[0])}; };
    GDConfig cfg;
    cfg.step_rule = fixed_step(1.0);
    cfg.stop.max_iters = 100;
    Report rep = gradient_descent(p, cfg, {2.0});
    CHECK(rep.status == Status::diverged);
    CHECK(all_finite(rep.x));
    CHECK(rep.stats.count("diverged_at_k") == 1);
    CHECK(std::isfinite(rep.trace.back().f));
}

TEST_CASE("configuration validation") {
    Problem p = half_square_1d();
    GDConfig cfg;
    cfg.step_rule = fixed_step(0.5);
    SECTION("all-disabled stop rule") {
        CHECK_THROWS_AS(gradient_descent(p, cfg, {1.0}), ParameterError);
    }
    SECTION("negative momentum") {
        cfg.stop.max_iters = 5;
        cfg.momentum_alpha = -0.1;
        CHECK_THROWS_AS(gradient_descent(p, cfg, {1.0}), ParameterError);
    }
    SECTION("nonpositive fixed step") {
        CHECK_THROWS_AS(fixed_step(0.0), ParameterError);
        CHECK_THROWS_AS(fixed_step(-1.0), ParameterError);
    }
    SECTION("non-finite start") {
        cfg.stop.max_iters = 5;
        CHECK_THROWS_AS(gradient_descent(p, cfg, {std::nan("")}), ParameterError);
    }
    SECTION("missing gradient oracle") {
        Problem q;
        q.d = 1;
        q.oracle.value = [](const Vector& x) { return x[0]; };
        cfg.stop.max_iters = 5;
        CHECK_THROWS_AS(gradient_descent(q, cfg, {1.0}), CapabilityError);
    }
}

TEST_CASE("per-iteration decrease bound at step one over L") {
    Rng rng(53, "decrease");
    for (int inst = 0; inst < 3; ++inst) {
        Problem p = random_quadratic_problem(rng, 10, 1.0, 25.0);
        double l = *p.L;
        for (double eta : {1.0 / l, 0.5 / l, 0.25 / l}) {
            GDConfig cfg;
            cfg.step_rule = fixed_step(eta);
            cfg.stop.max_iters = 60;
            Report rep = gradient_descent(p, cfg, random_vector(rng, 10));
            for (std::size_t k = 0; k + 1 < rep.trace.size(); ++k) {
                double g2 = *rep.trace[k].gnorm * *rep.trace[k].gnorm;
                CHECK(rep.trace[k + 1].f <= rep.trace[k].f - 0.5 * eta * g2 + 1e-10);
            }
        }
    }
}

TEST_CASE("smooth nonconvex bound on the best gradient norm") {
    // f(x) = sum_i x_i^2 + 3 sin^2(x_i): L = 8, global minimum 0 at the origin,
    // curvature 2 + 6 cos(2x) dips negative so the function is not convex.
    const std::size_t d = 4;
    Problem p;
    p.d = d;
    p.oracle.value = [](const Vector& x) {
        double s = 0.0;
        for (double v : x) s += v * v + 3.0 * std::sin(v) * std::sin(v);
        return s;
    };
    p.oracle.gradient = [](const Vector& x) {
        Vector g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i] + 3.0 * std::sin(2.0 * x[i]);
        return g;
    };
    p.L = 8.0;
    p.f_star = 0.0;

    Rng rng(61, "nonconvex");
    for (int inst = 0; inst < 3; ++inst) {
        Vector x0(d);
        for (auto& v : x0) v = rng.uniform(-2.0, 2.0);
        GDConfig cfg;
        cfg.step_rule = auto_step();
        cfg.stop.max_iters = 200;
        Report rep = gradient_descent(p, cfg, x0);
        double f0 = rep.trace.front().f;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < rep.trace.size(); ++t) {
            double g2 = *rep.trace[t].gnorm * *rep.trace[t].gnorm;
            best = std::min(best, g2);
            CHECK(best <= 2.0 * 8.0 * (f0 - 0.0) / static_cast<double>(t + 1) + 1e-9);
        }
    }
}

TEST_CASE("sublinear and linear rate bounds on controlled-spectrum quadratics") {
    Rng rng(67, "rates");
    for (int inst = 0; inst < 3; ++inst) {
        Problem p = random_quadratic_problem(rng, 10, 1.0, 10.0);
        Vector x0 = random_vector(rng, 10);
        GDConfig cfg;
        cfg.step_rule = auto_step();  // 1/L
        cfg.stop.max_iters = 300;
        Report rep = gradient_descent(p, cfg, x0);

        double l = *p.L, mu = *p.mu;
        double r2 = 0.0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            double dxi = x0[i] - (*p.x_star)[i];
            r2 += dxi * dxi;
        }
        double gap0 = rep.trace.front().f - *p.f_star;
        for (std::size_t t = 0; t < rep.trace.size(); ++t) {
            double gap = rep.trace[t].f - *p.f_star;
            CHECK(gap <= 2.0 * l * r2 / static_cast<double>(t + 1) + 1e-9);
            CHECK(gap <= std::pow(1.0 - mu / l, static_cast<double>(t)) * gap0 + 1e-9);
        }
    }
}

TEST_CASE("gamma sequence admissibility") {
    CHECK(gamma_product_ok(default_gamma, 100000));
    CHECK(gamma_product_ok([](long long) { return 0.0; }, 1000));
    CHECK_FALSE(gamma_product_ok([](long long) { return 0.9; }, 1000));
    CHECK_FALSE(gamma_product_ok([](long long) { return 1.5; }, 10));
    CHECK_FALSE(gamma_product_ok([](long long) { return -0.1; }, 10));

    Problem p = half_square_1d();
    AGMConfig cfg;
    cfg.stop.max_iters = 50;
    cfg.gamma_seq = [](long long) { return 0.9; };
    CHECK_THROWS_AS(agm(p, cfg, {1.0}), ParameterError);
}

TEST_CASE("zero gamma reproduces gradient descent exactly") {
    Rng rng(71, "agm_gd");
    Problem p = random_quadratic_problem(rng, 6, 1.0, 12.0);
    Vector x0 = random_vector(rng, 6);

    GDConfig gd;
    gd.step_rule = auto_step();
    gd.stop.max_iters = 60;
    AGMConfig acc;
    acc.step_rule = auto_step();
    acc.stop.max_iters = 60;
    acc.gamma_seq = [](long long) { return 0.0; };

    Report a = gradient_descent(p, gd, x0);
    Report b = agm(p, acc, x0);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(a.trace[k].step == b.trace[k].step);
    }
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("default warmup makes the first four accelerated iterates match descent") {
    GDConfig gd;
    gd.step_rule = fixed_step(0.5);
    gd.stop.max_iters = 10;
    AGMConfig acc;
    acc.step_rule = fixed_step(0.5);
    acc.stop.max_iters = 10;

    Problem p = half_square_1d();
    Report a = gradient_descent(p, gd, {1.0});
    Report b = agm(p, acc, {1.0});
    for (std::size_t k = 0; k <= 4; ++k) CHECK(a.trace[k].f == b.trace[k].f);
}

TEST_CASE("accelerated rate bound holds on a random quadratic") {
    Rng rng(79, "agm_rate");
    for (int inst = 0; inst < 3; ++inst) {
        Problem p = random_quadratic_problem(rng, 20, 1.0, 100.0);
        Vector x0 = random_vector(rng, 20);
        AGMConfig cfg;
        cfg.step_rule = auto_step();
        cfg.stop.max_iters = 400;
        Report rep = agm(p, cfg, x0);

        double r2 = 0.0;
        for (std::size_t i = 0; i < x0.size(); ++i) {
            double dxi = x0[i] - (*p.x_star)[i];
            r2 += dxi * dxi;
        }
        for (std::size_t t = 0; t < rep.trace.size(); ++t) {
            double gap = rep.trace[t].f - *p.f_star;
            double tt = static_cast<double>(t + 1);
            CHECK(gap <= 2.0 * (*p.L) * r2 / (tt * tt) + 1e-9);
        }
    }
}

TEST_CASE("acceleration beats plain descent on an ill-conditioned instance") {
    Rng rng(83, "agm_vs_gd");
    Problem p = random_quadratic_problem(rng, 10, 1.0, 100.0);
    Vector x0 = random_vector(rng, 10);

    GDConfig gd;
    gd.step_rule = auto_step();
    gd.stop.max_iters = 3000;
    AGMConfig acc;
    acc.step_rule = auto_step();
    acc.stop.max_iters = 3000;

    long long it_gd = iters_to_gap(gradient_descent(p, gd, x0), *p.f_star, 1e-6);
    long long it_agm = iters_to_gap(agm(p, acc, x0), *p.f_star, 1e-6);
    REQUIRE(it_gd >= 0);
    REQUIRE(it_agm >= 0);
    CHECK(it_agm < it_gd);
}
