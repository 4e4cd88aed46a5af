#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "descentforge/first_order.hpp"
#include "descentforge/nonsmooth.hpp"
#include "descentforge/rng.hpp"
#include "helpers.hpp"

using namespace descentforge;
using dftest::random_vector;

namespace {

Problem abs_problem() {
    Problem p;
    p.d = 1;
    p.oracle.value = [](const Vector& x) { return norm(x, Norm::l1); };
    p.oracle.subgradient = [](const Vector& x) { return subgrad_l1(x); };
    return p;
}

}  // namespace

TEST_CASE("huber hand values") {
    HuberParams h;
    auto r0 = huber(0.0, h);
    CHECK(r0.value == 0.0);
    CHECK(r0.derivative == 0.0);
    auto r2 = huber(2.0, h);
    CHECK(r2.value == 1.5);
    CHECK(r2.derivative == 1.0);
    auto rn = huber(-2.0, h);
    CHECK(rn.value == 1.5);
    CHECK(rn.derivative == -1.0);
    auto rh = huber(0.5, h);
    CHECK(rh.value == 0.125);
    CHECK(rh.derivative == 0.5);

    HuberParams ph;
    ph.kind = HuberKind::pseudo_huber;
    auto p0 = huber(0.0, ph);
    CHECK(p0.value == 0.0);
    CHECK(p0.derivative == 0.0);

    HuberParams bad;
    bad.mu = 0.0;
    CHECK_THROWS_AS(huber(1.0, bad), ParameterError);
}

TEST_CASE("huber is dominated by the absolute value, pseudo-huber is not") {
    for (double mu : {0.3, 1.0, 2.5}) {
        HuberParams h;
        h.mu = mu;
        for (double x = -5.0; x <= 5.0; x += 0.01) {
            CHECK(huber(x, h).value <= std::fabs(x));
        }
    }
    HuberParams ph;
    ph.mu = 0.5;
    ph.kind = HuberKind::pseudo_huber;
    CHECK(huber(2.0, ph).value > 2.0);
}

TEST_CASE("huber branches agree at the seam") {
    for (double mu : {0.25, 1.0, 3.0}) {
        double inner_v = mu * mu / (2.0 * mu);
        double outer_v = mu - mu / 2.0;
        CHECK(std::fabs(inner_v - outer_v) <= 1e-12);
        double inner_d = mu / mu;
        CHECK(std::fabs(inner_d - 1.0) <= 1e-12);

        HuberParams h;
        h.mu = mu;
        double eps = 1e-13 * mu;
        CHECK(std::fabs(huber(mu - eps, h).value - huber(mu + eps, h).value) <= 1e-12);
        CHECK(std::fabs(huber(mu - eps, h).derivative - huber(mu + eps, h).derivative) <= 1e-12);
    }
}

TEST_CASE("absolute value subdifferential") {
    auto pos = subdiff_abs(2.0);
    CHECK(pos.lo == 1.0);
    CHECK(pos.hi == 1.0);
    CHECK(pos.singleton());

    auto zero = subdiff_abs(0.0);
    CHECK(zero.lo == -1.0);
    CHECK(zero.hi == 1.0);
    CHECK_FALSE(zero.singleton());
    CHECK(zero.midpoint() == 0.0);

    auto neg = subdiff_abs(-3.0);
    CHECK(neg.lo == -1.0);
    CHECK(neg.hi == -1.0);
}

TEST_CASE("l1 subgradients satisfy the supporting-plane inequality") {
    Rng rng(41, "subgrad");
    for (int trial = 0; trial < 100; ++trial) {
        Vector x = random_vector(rng, 6);
        Vector y = random_vector(rng, 6);
        Vector g = subgrad_l1(x);
        double lhs = norm(y, Norm::l1);
        double rhs = norm(x, Norm::l1) + dot(g, sub(y, x));
        CHECK(lhs >= rhs - 1e-12);
    }
}

TEST_CASE("subgradient method on a smooth objective retraces gradient descent") {
    Rng rng(43, "smooth");
    Problem p = dftest::random_quadratic_problem(rng, 4, 1.0, 6.0);
    p.oracle.subgradient = p.oracle.gradient;
    Vector x0 = random_vector(rng, 4);

    GDConfig gd;
    gd.step_rule = fixed_step(0.1);
    gd.stop.max_iters = 25;
    Report a = gradient_descent(p, gd, x0);

    SubgradientConfig cfg;
    cfg.eta0 = 0.1;
    cfg.stop.max_iters = 25;
    Report b = subgradient_method(p, SubgradientMode::full, std::nullopt, cfg, x0);

    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(*a.trace[k].gnorm == *b.trace[k].gnorm);
        CHECK(a.trace[k].step == b.trace[k].step);
    }
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("fixed-step subgradient method oscillates around the kink") {
    SubgradientConfig cfg;
    cfg.eta0 = 0.4;
    cfg.stop.max_iters = 5;
    Report rep = subgradient_method(abs_problem(), SubgradientMode::full, std::nullopt, cfg,
                                    {1.0});
    REQUIRE(rep.trace.size() == 5);
    CHECK(rep.trace[0].f == 1.0);
    CHECK(rep.trace[1].f == Catch::Approx(0.6).margin(1e-15));
    CHECK(rep.trace[2].f == Catch::Approx(0.2).margin(1e-15));
    CHECK(rep.trace[3].f == Catch::Approx(0.2).margin(1e-15));
    CHECK(rep.trace[4].f == Catch::Approx(0.2).margin(1e-15));
    // the iterate at k=3 sits on the negative side of the kink
    CHECK(rep.trace[4].extras.at("best_f") == Catch::Approx(0.2).margin(1e-15));
    CHECK(rep.status == Status::iteration_limit);
}

TEST_CASE("diminishing steps drive the best value to the minimum") {
    SubgradientConfig cfg;
    cfg.eta0 = 1.0;
    cfg.schedule = StepSchedule::inv_k;
    cfg.stop.max_iters = 1000;
    Report rep = subgradient_method(abs_problem(), SubgradientMode::full, std::nullopt, cfg,
                                    {0.7});
    CHECK(rep.trace.back().extras.at("best_f") <= 1e-2);
}

TEST_CASE("projected subgradient method stays in the constraint set") {
    Problem p;
    p.d = 1;
    p.oracle.value = [](const Vector& x) { return std::fabs(x[0] - 3.0); };
    p.oracle.subgradient = [](const Vector& x) {
        return Vector{subdiff_abs(x[0] - 3.0).midpoint()};
    };
    SetSpec box = SetSpec::box({-1.0}, {1.0});
    SubgradientConfig cfg;
    cfg.eta0 = 0.5;
    cfg.stop.max_iters = 10;
    Report rep = subgradient_method(p, SubgradientMode::full, box, cfg, {0.0});
    CHECK(rep.x[0] == 1.0);
    CHECK(rep.trace.back().extras.at("best_f") == 2.0);
}

TEST_CASE("stochastic subgradient sampling is seed-deterministic") {
    Problem p;
    p.d = 1;
    Vector centers{1.0, 2.0, 3.0};
    p.oracle.term_count = 3;
    p.oracle.value = [centers](const Vector& x) {
        double s = 0.0;
        for (double c : centers) s += 0.5 * (x[0] - c) * (x[0] - c);
        return s / 3.0;
    };
    p.oracle.term_gradient = [centers](std::size_t i, const Vector& x) {
        return Vector{x[0] - centers[i]};
    };

    SubgradientConfig cfg;
    cfg.eta0 = 0.05;
    cfg.seed = 99;
    cfg.stop.max_iters = 40;
    Report a = subgradient_method(p, SubgradientMode::stochastic, std::nullopt, cfg, {0.0});
    Report b = subgradient_method(p, SubgradientMode::stochastic, std::nullopt, cfg, {0.0});
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(a.trace[k].extras.at("sampled_index") == b.trace[k].extras.at("sampled_index"));
        double idx = a.trace[k].extras.at("sampled_index");
        CHECK(idx >= 0.0);
        CHECK(idx <= 2.0);
    }

    SECTION("full-batch average equals the exact mean gradient") {
        SubgradientConfig mb = cfg;
        mb.batch = 3;
        Report r = subgradient_method(p, SubgradientMode::minibatch, std::nullopt, mb, {0.0});
        // first record: gradient of the mean objective at 0 is -(1+2+3)/3 = -2
        CHECK(*r.trace[0].gnorm == Catch::Approx(2.0).margin(1e-15));
    }
    SECTION("validation") {
        SubgradientConfig bad = cfg;
        bad.batch = 4;
        CHECK_THROWS_AS(
            subgradient_method(p, SubgradientMode::minibatch, std::nullopt, bad, {0.0}),
            ParameterError);
        Problem q;
        q.oracle.value = [](const Vector&) { return 0.0; };
        CHECK_THROWS_AS(
            subgradient_method(q, SubgradientMode::full, std::nullopt, cfg, {0.0}),
            CapabilityError);
        CHECK_THROWS_AS(
            subgradient_method(q, SubgradientMode::stochastic, std::nullopt, cfg, {0.0}),
            CapabilityError);
    }
}

TEST_CASE("coordinate descent solves separable objectives in one sweep") {
    Vector c{2.0, -1.0, 0.5};
    Problem p;
    p.d = 3;
    p.oracle.value = [c](const Vector& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += 0.5 * (x[i] - c[i]) * (x[i] - c[i]);
        return s;
    };
    p.oracle.gradient = [c](const Vector& x) { return sub(x, c); };
    StopRule stop;
    stop.grad_tol = 1e-12;
    stop.max_iters = 10;
    Report rep = coordinate_descent(
        p, [c](std::size_t j, const Vector&) { return c[j]; }, CoordOrder::cyclic, stop,
        {0.0, 0.0, 0.0});
    CHECK(rep.status == Status::converged);
    CHECK(rep.x == c);
    CHECK(rep.trace.size() == 2);
}

TEST_CASE("gauss-seidel sweeps on a coupled quadratic decrease monotonically") {
    Problem p;
    p.d = 2;
    p.oracle.value = [](const Vector& x) {
        return x[0] * x[0] + x[0] * x[1] + x[1] * x[1];
    };
    p.oracle.gradient = [](const Vector& x) {
        return Vector{2.0 * x[0] + x[1], x[0] + 2.0 * x[1]};
    };
    auto solver = [](std::size_t j, const Vector& x) { return -0.5 * x[1 - j]; };
    StopRule stop;
    stop.grad_tol = 1e-8;
    stop.max_iters = 200;
    Report rep = coordinate_descent(p, solver, CoordOrder::cyclic, stop, {1.0, 1.0});
    CHECK(rep.status == Status::converged);
    for (std::size_t k = 0; k + 1 < rep.trace.size(); ++k)
        CHECK(rep.trace[k + 1].f < rep.trace[k].f);
    CHECK(*rep.trace.back().gnorm <= 1e-8);

    SECTION("reruns are identical") {
        Report again = coordinate_descent(p, solver, CoordOrder::cyclic, stop, {1.0, 1.0});
        REQUIRE(again.trace.size() == rep.trace.size());
        for (std::size_t k = 0; k < rep.trace.size(); ++k)
            CHECK(again.trace[k].f == rep.trace[k].f);
    }
    SECTION("later coordinates see earlier updates within the sweep") {
        std::vector<double> seen;
        auto spy = [&](std::size_t j, const Vector& x) {
            seen.push_back(x[0]);
            return -0.5 * x[1 - j];
        };
        StopRule one;
        one.max_iters = 2;
        coordinate_descent(p, spy, CoordOrder::cyclic, one, {1.0, 1.0});
        REQUIRE(seen.size() == 2);
        CHECK(seen[0] == 1.0);   // j=0 sees the initial point
        CHECK(seen[1] == -0.5);  // j=1 sees the fresh x0 update
    }
}

TEST_CASE("non-finite coordinate updates are reported with the coordinate") {
    Problem p;
    p.d = 2;
    p.oracle.value = [](const Vector&) { return 0.0; };
    StopRule stop;
    stop.max_iters = 5;
    auto bad = [](std::size_t j, const Vector&) {
        return j == 1 ? std::nan("") : 0.0;
    };
    CHECK_THROWS_WITH(coordinate_descent(p, bad, CoordOrder::cyclic, stop, {0.0, 0.0}),
                      Catch::Matchers::ContainsSubstring("coordinate 1"));
}

TEST_CASE("identity-design lasso coordinate descent soft-thresholds the labels") {
    Matrix x = identity(3);
    Vector y{1.5, -0.2, 0.8};
    StopRule stop;
    stop.grad_tol = 1e-12;
    stop.max_iters = 10;
    Report rep = lasso_cd(x, y, 0.5, stop, Vector(3, 0.0));
    CHECK(rep.status == Status::converged);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(rep.x[j] == soft_threshold(y[j], 0.5));
    CHECK(rep.trace.size() == 2);
    CHECK(*rep.trace[1].gnorm == 0.0);
}

TEST_CASE("lasso with dominating penalty zeroes every coefficient") {
    Matrix x = identity(4);
    Vector y{0.3, -0.9, 0.5, 0.1};
    StopRule stop;
    stop.grad_tol = 1e-12;
    stop.max_iters = 10;
    Report rep = lasso_cd(x, y, 1.0, stop, Vector(4, 0.0));
    CHECK(rep.x == Vector(4, 0.0));
}

TEST_CASE("unpenalized lasso matches the least-squares solution") {
    Rng rng(47, "ls");
    Matrix x(10, 4);
    for (auto& v : x.a) v = rng.normal();
    Vector y = random_vector(rng, 10);

    StopRule stop;
    stop.grad_tol = 1e-10;
    stop.max_iters = 5000;
    Report rep = lasso_cd(x, y, 0.0, stop, Vector(4, 0.0));
    CHECK(rep.status == Status::converged);

    Matrix xtx = matmul(transpose(x), x);
    Vector beta_ls = solve_linear(xtx, tmatvec(x, y));
    double r_cd = norm(sub(y, matvec(x, rep.x)), Norm::l2);
    double r_ls = norm(sub(y, matvec(x, beta_ls)), Norm::l2);
    CHECK(std::fabs(r_cd - r_ls) <= 1e-8);
}

TEST_CASE("lasso fixed point satisfies the coordinate optimality conditions") {
    Rng rng(53, "kkt");
    Matrix x(12, 5);
    for (auto& v : x.a) v = rng.normal();
    Vector y = random_vector(rng, 12);
    const double lambda = 0.3;

    StopRule stop;
    stop.grad_tol = 1e-10;
    stop.max_iters = 20000;
    Report rep = lasso_cd(x, y, lambda, stop, Vector(5, 0.0));
    REQUIRE(rep.status == Status::converged);

    Vector r = sub(y, matvec(x, rep.x));
    for (std::size_t j = 0; j < 5; ++j) {
        double corr = 0.0;
        for (std::size_t i = 0; i < 12; ++i) corr += x(i, j) * r[i];
        if (rep.x[j] == 0.0) {
            CHECK(std::fabs(corr) <= lambda + 1e-8);
        } else {
            CHECK(corr == Catch::Approx(lambda * (rep.x[j] > 0.0 ? 1.0 : -1.0)).margin(1e-8));
        }
    }
}

TEST_CASE("lasso rejects zero columns naming the offender") {
    Matrix x(3, 2);
    x(0, 0) = 1.0;
    x(1, 0) = -1.0;
    x(2, 0) = 2.0;
    StopRule stop;
    stop.max_iters = 5;
    CHECK_THROWS_WITH(lasso_cd(x, {1.0, 2.0, 3.0}, 0.1, stop, {0.0, 0.0}),
                      Catch::Matchers::ContainsSubstring("column 1"));
}

TEST_CASE("step schedules") {
    CHECK(schedule_eta(StepSchedule::inv_k, 1.0, 4) == 0.25);
    CHECK(schedule_eta(StepSchedule::inv_sqrt_k, 1.0, 4) == 0.5);
    CHECK(schedule_eta(StepSchedule::constant, 0.3, 17) == 0.3);
    CHECK_THROWS_AS(schedule_eta(StepSchedule::inv_k, 1.0, 0), ParameterError);
}
