#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "descentforge/proximal.hpp"
#include "descentforge/rng.hpp"
#include "helpers.hpp"

using namespace descentforge;
using dftest::random_vector;

namespace {

Problem distance_problem(Vector c) {
    // f(x) = 0.5 ||x - c||^2, L = 1
    Problem p;
    p.d = c.size();
    p.oracle.value = [c](const Vector& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - c[i]) * (x[i] - c[i]);
        return 0.5 * s;
    };
    p.oracle.gradient = [c](const Vector& x) { return sub(x, c); };
    p.L = 1.0;
    return p;
}

SetSpec halfspace_nonneg(std::size_t coord, std::size_t d) {
    const double inf = std::numeric_limits<double>::infinity();
    Vector lo(d, -inf), hi(d, inf);
    lo[coord] = 0.0;
    return SetSpec::box(lo, hi);
}

}  // namespace

TEST_CASE("soft-thresholding prox hand values") {
    Vector y = prox(ProxSpec::l1(1.0), {2.0, -0.5, 1.0});
    CHECK(y == Vector{1.0, 0.0, 0.0});
    CHECK(prox(ProxSpec::l1(0.0), {2.0, -0.5, 1.0}) == Vector{2.0, -0.5, 1.0});
    CHECK(prox(ProxSpec::zero(), {3.0, 4.0}) == Vector{3.0, 4.0});
}

TEST_CASE("l2 prox hand values") {
    Vector a = prox(ProxSpec::l2(2.5), {3.0, 4.0});
    CHECK(a[0] == Catch::Approx(1.5));
    CHECK(a[1] == Catch::Approx(2.0));
    CHECK(prox(ProxSpec::l2(10.0), {3.0, 4.0}) == Vector{0.0, 0.0});
    CHECK(prox(ProxSpec::l2(1.0), {0.0, 0.0}) == Vector{0.0, 0.0});
    CHECK(prox(ProxSpec::l2(0.0), {3.0, 4.0}) == Vector{3.0, 4.0});
}

TEST_CASE("custom prox returning non-finite values propagates an error") {
    auto bad = ProxSpec::custom(
        [](double, const Vector& x) { return Vector(x.size(), std::nan("")); });
    CHECK_THROWS_AS(prox(bad, {1.0}), EvaluationError);
}

TEST_CASE("box and ball projections") {
    SetSpec box = SetSpec::box({-1.0, -1.0}, {1.0, 1.0});
    CHECK(project(box, Vector{2.0, -3.0}) == Vector{1.0, -1.0});
    CHECK(project(box, Vector{0.25, -0.5}) == Vector{0.25, -0.5});

    SetSpec ball = SetSpec::l2_ball({0.0, 0.0}, 1.0);
    Vector p = project(ball, Vector{0.0, 2.0});
    CHECK(p[0] == 0.0);
    CHECK(p[1] == Catch::Approx(1.0));
    CHECK(project(ball, Vector{0.1, 0.2}) == Vector{0.1, 0.2});
}

TEST_CASE("affine projection") {
    Matrix a(1, 2);
    a(0, 0) = 1.0;
    a(0, 1) = 1.0;
    SetSpec s = SetSpec::affine(a, {1.0});

    SECTION("feasible points are fixed") {
        Vector x{0.3, 0.7};
        CHECK(max_abs_diff(project(s, x), x) <= 1e-15);
    }
    SECTION("projection restores feasibility and is orthogonal to the null space") {
        Vector x{2.0, -0.5};
        Vector p = project(s, x);
        CHECK(p[0] + p[1] == Catch::Approx(1.0));
        // x - p must lie in the row space: proportional to [1, 1]
        CHECK((x[0] - p[0]) == Catch::Approx(x[1] - p[1]));
    }
    SECTION("rank-deficient rows raise RankError") {
        Matrix bad(2, 2);
        bad(0, 0) = 1.0;
        bad(0, 1) = 1.0;
        bad(1, 0) = 2.0;
        bad(1, 1) = 2.0;
        SetSpec sd = SetSpec::affine(bad, {1.0, 2.0});
        CHECK_THROWS_AS(project(sd, Vector{0.0, 0.0}), RankError);
    }
}

TEST_CASE("orthogonal cone projection") {
    SECTION("scaled identity collapses to identity") {
        Matrix x(2, 2);
        x(0, 0) = x(1, 1) = 2.0;
        Matrix y = project(SetSpec::orthogonal_cone(1.0), x);
        CHECK(std::fabs(y(0, 0) - 1.0) <= 1e-12);
        CHECK(std::fabs(y(1, 1) - 1.0) <= 1e-12);
        CHECK(std::fabs(y(0, 1)) <= 1e-12);
        CHECK(std::fabs(y(1, 0)) <= 1e-12);
    }
    SECTION("all singular values become the scale") {
        Rng rng(5, "cone");
        Matrix x(4, 3);
        for (auto& v : x.a) v = rng.normal();
        Matrix y = project(SetSpec::orthogonal_cone(2.5), x);
        for (double s : svd(y).s) CHECK(s == Catch::Approx(2.5).margin(1e-10));
    }
    SECTION("vector argument is rejected") {
        CHECK_THROWS_AS(project(SetSpec::orthogonal_cone(1.0), Vector{1.0, 2.0}), InvalidKindError);
    }
    SECTION("matrix projection onto non-cone sets is rejected") {
        Matrix x(2, 2);
        CHECK_THROWS_AS(project(SetSpec::box({-1.0}, {1.0}), x), InvalidKindError);
    }
}

TEST_CASE("projection idempotence across set kinds") {
    Rng rng(9, "idem");
    SetSpec box = SetSpec::box({-1.0, -1.0, -1.0}, {0.5, 2.0, 0.0});
    SetSpec ball = SetSpec::l2_ball({1.0, -1.0, 0.0}, 0.75);
    Matrix a(1, 3);
    a(0, 0) = 1.0;
    a(0, 1) = -1.0;
    a(0, 2) = 2.0;
    SetSpec aff = SetSpec::affine(a, {0.5});
    SetSpec cust = SetSpec::custom([box](const Vector& v) { return project(box, v); });
    for (int trial = 0; trial < 20; ++trial) {
        Vector x = random_vector(rng, 3);
        for (const SetSpec& s : {box, ball, aff, cust}) {
            Vector p1 = project(s, x);
            CHECK(max_abs_diff(project(s, p1), p1) <= 1e-12);
        }
    }
    Matrix x(3, 2);
    for (auto& v : x.a) v = rng.normal();
    SetSpec cone = SetSpec::orthogonal_cone(1.5);
    Matrix p1 = project(cone, x);
    Matrix p2 = project(cone, p1);
    CHECK(norm(sub(p2.a, p1.a), Norm::linf) <= 1e-12);
}

TEST_CASE("prox operators are nonexpansive") {
    Rng rng(13, "firm");
    SetSpec box = SetSpec::box({-0.5, -0.5, -0.5, -0.5}, {1.0, 1.0, 1.0, 1.0});
    SetSpec ball = SetSpec::l2_ball({0.0, 0.0, 0.0, 0.0}, 1.25);
    std::vector<ProxSpec> specs{ProxSpec::l1(0.7), ProxSpec::l2(1.3),
                                ProxSpec::indicator(box), ProxSpec::indicator(ball)};
    for (int trial = 0; trial < 100; ++trial) {
        Vector x = random_vector(rng, 4);
        Vector y = random_vector(rng, 4);
        for (const auto& g : specs) {
            Vector px = prox(g, x);
            Vector py = prox(g, y);
            Vector dp = sub(px, py);
            Vector dxy = sub(x, y);
            CHECK(norm(dp, Norm::l2) <= norm(dxy, Norm::l2) + 1e-12);
            // firm version: |Px - Py|^2 <= (Px - Py)'(x - y)
            CHECK(dot(dp, dp) <= dot(dp, dxy) + 1e-12);
        }
    }
}

TEST_CASE("norm-ball decomposition residual vanishes for dual pairs") {
    Rng rng(17, "moreau");
    const double inf = std::numeric_limits<double>::infinity();
    (void)inf;
    SetSpec linf_ball = SetSpec::box({-1.0, -1.0, -1.0, -1.0, -1.0, -1.0},
                                     {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
    SetSpec l2_ball = SetSpec::l2_ball(Vector(6, 0.0), 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vector x = random_vector(rng, 6);
        double lambda = rng.uniform(0.1, 3.0);
        CHECK(moreau_check(ProxSpec::l1(1.0), linf_ball, x, lambda) <= 1e-12);
        CHECK(moreau_check(ProxSpec::l2(1.0), l2_ball, x, lambda) <= 1e-12);
    }
    CHECK(moreau_check(ProxSpec::l2(1.0), l2_ball, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 1.0) == 0.0);
    CHECK(moreau_check(ProxSpec::l2(1.0), l2_ball, {3.0, 4.0, 0.0, 0.0, 0.0, 0.0}, 2.5) <= 1e-12);
}

TEST_CASE("proximal point iteration") {
    SECTION("l1 prox reaches the origin in two iterations") {
        Oracle o;
        o.value = [](const Vector& x) { return norm(x, Norm::l1); };
        o.prox = [](double l, const Vector& x) { return prox(ProxSpec::l1(l), x); };
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 50;
        Report rep = proximal_point(o, {2.0, -0.5}, 1.0, stop);
        CHECK(rep.status == Status::converged);
        CHECK(rep.x == Vector{0.0, 0.0});
        CHECK(rep.trace.size() == 3);  // residual hits zero at k = 2
    }
    SECTION("identity prox is a fixed point immediately") {
        Oracle o;
        o.prox = [](double, const Vector& x) { return x; };
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 10;
        Report rep = proximal_point(o, {1.0, 2.0}, 1.0, stop);
        CHECK(rep.status == Status::converged);
        CHECK(rep.trace.size() == 1);
        CHECK(rep.x == Vector{1.0, 2.0});
    }
    SECTION("quadratic prox averages toward the center") {
        Vector c{3.0, -1.0};
        Oracle o;
        o.value = [c](const Vector& x) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - c[i]) * (x[i] - c[i]);
            return 0.5 * s;
        };
        o.prox = [c](double l, const Vector& x) {
            Vector y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] + l * c[i]) / (1.0 + l);
            return y;
        };
        StopRule stop;
        stop.grad_tol = 1e-10;
        stop.max_iters = 200;
        Report rep = proximal_point(o, {1.0, 1.0}, 1.0, stop);
        CHECK(rep.status == Status::converged);
        CHECK(max_abs_diff(rep.x, c) <= 1e-9);
        // first update: (x0 + c) / 2
        CHECK(rep.trace[1].gnorm);
    }
    SECTION("validation") {
        Oracle o;
        StopRule stop;
        stop.max_iters = 5;
        CHECK_THROWS_AS(proximal_point(o, {1.0}, 1.0, stop), CapabilityError);
        o.prox = [](double, const Vector& x) { return x; };
        CHECK_THROWS_AS(proximal_point(o, {1.0}, 0.0, stop), ParameterError);
    }
}

TEST_CASE("proximal gradient with zero regularizer matches gradient descent") {
    Rng rng(21, "pg_zero");
    Problem p = dftest::random_quadratic_problem(rng, 5, 1.0, 8.0);
    Vector x0 = random_vector(rng, 5);

    StopRule stop;
    stop.max_iters = 30;
    GDConfig gd;
    gd.step_rule = auto_step();
    gd.stop = stop;
    Report a = gradient_descent(p, gd, x0);
    Report b = proximal_gradient(p, ProxSpec::zero(), x0, auto_step(), stop);

    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(a.trace[k].step == b.trace[k].step);
        CHECK(*b.trace[k].gnorm == Catch::Approx(*a.trace[k].gnorm).margin(1e-9));
    }
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("identity-design lasso solves in one proximal gradient step") {
    Vector y{1.5, -0.2, 0.8};
    const double lambda = 0.5;
    Problem p = distance_problem(y);
    StopRule stop;
    stop.max_iters = 4;
    Report rep = proximal_gradient(p, ProxSpec::l1(lambda), Vector(3, 0.0),
                                   fixed_step(1.0), stop);
    Vector expect{1.0, 0.0, 0.3};
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(rep.x[i] == Catch::Approx(expect[i]).margin(1e-15));
    // after the first step the iterate never moves again
    CHECK(*rep.trace[2].gnorm == 0.0);
}

TEST_CASE("indicator proximal gradient equals projected gradient") {
    Rng rng(25, "pg_ind");
    Problem p = distance_problem({2.0, 1.0});
    SetSpec box = SetSpec::box({-1.0, -1.0}, {1.0, 1.0});
    Vector x0{-0.5, 0.5};
    StopRule stop;
    stop.max_iters = 20;

    Report a = proximal_gradient(p, ProxSpec::indicator(box), x0, auto_step(), stop);
    Report b = projected_gradient(p, box, x0, auto_step(), stop);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].f == b.trace[k].f);
        CHECK(*a.trace[k].gnorm == *b.trace[k].gnorm);
        CHECK(a.trace[k].step == b.trace[k].step);
    }
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("projected gradient onto the unit ball") {
    Problem p = distance_problem({2.0, 0.0});
    SetSpec ball = SetSpec::l2_ball({0.0, 0.0}, 1.0);
    StopRule stop;
    stop.grad_tol = 1e-10;
    stop.max_iters = 100;
    Report rep = projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop);
    CHECK(rep.status == Status::converged);
    CHECK(rep.x[0] == Catch::Approx(1.0).margin(1e-9));
    CHECK(std::fabs(rep.x[1]) <= 1e-12);
}

TEST_CASE("inactive constraints leave the gradient descent path unchanged") {
    Problem p = distance_problem({1.0, 2.0});
    SetSpec box = SetSpec::box({-10.0, -10.0}, {10.0, 10.0});
    Vector x0{3.0, -3.0};
    StopRule stop;
    stop.max_iters = 15;

    GDConfig gd;
    gd.step_rule = fixed_step(0.5);
    gd.stop = stop;
    Report a = gradient_descent(p, gd, x0);
    Report b = projected_gradient(p, box, x0, fixed_step(0.5), stop);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) CHECK(a.trace[k].f == b.trace[k].f);
    CHECK(max_abs_diff(a.x, b.x) == 0.0);
}

TEST_CASE("relaxed two-step projected gradient") {
    Problem p = distance_problem({2.0, 0.0});
    SetSpec ball = SetSpec::l2_ball({0.0, 0.0}, 1.0);
    StopRule stop;
    stop.grad_tol = 1e-10;
    stop.max_iters = 500;

    SECTION("gamma one equals the default variant") {
        Report a = projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop, 1.0);
        Report b = projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop);
        REQUIRE(a.trace.size() == b.trace.size());
        CHECK(max_abs_diff(a.x, b.x) == 0.0);
    }
    SECTION("fractional gamma stays feasible and reaches the same solution") {
        Report rep = projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop, 0.5);
        CHECK(rep.status == Status::converged);
        CHECK(rep.x[0] == Catch::Approx(1.0).margin(1e-8));
        CHECK(norm(rep.x, Norm::l2) <= 1.0 + 1e-10);
    }
    SECTION("gamma outside (0,1] is rejected") {
        CHECK_THROWS_AS(projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop, 0.0),
                        ParameterError);
        CHECK_THROWS_AS(projected_gradient(p, ball, {0.0, 0.0}, auto_step(), stop, 1.5),
                        ParameterError);
    }
}

TEST_CASE("feasibility of projected iterates") {
    Rng rng(29, "pg_feas");
    Problem p = dftest::random_quadratic_problem(rng, 3, 1.0, 5.0);
    SetSpec ball = SetSpec::l2_ball({0.0, 0.0, 0.0}, 0.5);
    StopRule stop;
    stop.max_iters = 40;
    // infeasible start: every iterate after the first projection is in S
    Report rep = projected_gradient(p, ball, {4.0, 4.0, 4.0}, auto_step(), stop);
    CHECK(norm(rep.x, Norm::l2) <= 0.5 + 1e-10);
}

TEST_CASE("cyclic projections") {
    SECTION("two halfspaces clamp in one pass") {
        std::vector<SetSpec> sets{halfspace_nonneg(0, 2), halfspace_nonneg(1, 2)};
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 10;
        Report rep = pocs(sets, {-1.0, -1.0}, stop);
        CHECK(rep.status == Status::converged);
        CHECK(rep.x == Vector{0.0, 0.0});
        CHECK(rep.trace.size() == 2);
    }
    SECTION("a single set needs one projection") {
        std::vector<SetSpec> sets{SetSpec::box({-1.0, -1.0}, {1.0, 1.0})};
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 10;
        Report rep = pocs(sets, {3.0, -4.0}, stop);
        CHECK(rep.status == Status::converged);
        CHECK(rep.x == Vector{1.0, -1.0});
        CHECK(rep.trace.size() == 2);
    }
    SECTION("disjoint balls oscillate and report no_convergence") {
        std::vector<SetSpec> sets{SetSpec::l2_ball({3.0, 0.0}, 1.0),
                                  SetSpec::l2_ball({-3.0, 0.0}, 1.0)};
        StopRule stop;
        stop.grad_tol = 1e-8;
        stop.max_iters = 50;
        Report rep = pocs(sets, {0.0, 0.5}, stop);
        CHECK(rep.status == Status::no_convergence);
        CHECK(rep.trace.back().f > 1.0);
    }
    SECTION("empty set list is rejected") {
        StopRule stop;
        stop.max_iters = 5;
        CHECK_THROWS_AS(pocs({}, {0.0}, stop), ParameterError);
    }
}

TEST_CASE("averaged projections") {
    std::vector<SetSpec> sets{halfspace_nonneg(0, 2), halfspace_nonneg(1, 2)};
    SECTION("first iterate is the average of the projections") {
        StopRule stop;
        stop.max_iters = 2;
        Report rep = averaged_projections(sets, {-1.0, -1.0}, stop);
        CHECK(rep.x == Vector{-0.5, -0.5});
    }
    SECTION("limit reaches the intersection") {
        StopRule stop;
        stop.grad_tol = 1e-8;
        stop.max_iters = 200;
        Report rep = averaged_projections(sets, {-1.0, -1.0}, stop);
        CHECK(rep.status == Status::converged);
        CHECK(max_abs_diff(rep.x, {0.0, 0.0}) <= 1e-8);
    }
    SECTION("points in the intersection are fixed") {
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 10;
        Report rep = averaged_projections(sets, {0.25, 0.75}, stop);
        CHECK(rep.status == Status::converged);
        CHECK(rep.trace.size() == 1);
        CHECK(rep.x == Vector{0.25, 0.75});
    }
    SECTION("single set equals cyclic projections") {
        std::vector<SetSpec> one{SetSpec::box({-1.0, -1.0}, {1.0, 1.0})};
        StopRule stop;
        stop.grad_tol = 1e-12;
        stop.max_iters = 10;
        Report a = averaged_projections(one, {3.0, -4.0}, stop);
        Report b = pocs(one, {3.0, -4.0}, stop);
        CHECK(max_abs_diff(a.x, b.x) == 0.0);
    }
}

TEST_CASE("conditional gradient on a linear objective over a box") {
    Problem p;
    p.d = 2;
    Vector c{1.0, -2.0};
    p.oracle.value = [c](const Vector& x) { return dot(c, x); };
    p.oracle.gradient = [c](const Vector&) { return c; };
    p.sets.push_back(SetSpec::box({-1.0, -1.0}, {1.0, 1.0}));

    FWConfig cfg;
    cfg.stop.grad_tol = 1e-12;
    cfg.stop.max_iters = 10;
    Report rep = frank_wolfe(p, {0.0, 0.0}, cfg);
    CHECK(rep.status == Status::converged);
    CHECK(rep.x == Vector{-1.0, 1.0});
    CHECK(rep.trace.size() == 2);
    CHECK(rep.trace[1].extras.at("duality_gap") <= 1e-12);
}

TEST_CASE("conditional gradient stops immediately at the optimum") {
    Problem p = distance_problem({0.3, 0.2});
    p.sets.push_back(SetSpec::l2_ball({0.0, 0.0}, 1.0));
    FWConfig cfg;
    cfg.stop.grad_tol = 1e-10;
    cfg.stop.max_iters = 100;
    Report rep = frank_wolfe(p, {0.3, 0.2}, cfg);
    CHECK(rep.status == Status::converged);
    CHECK(rep.trace.size() == 1);
    CHECK(std::fabs(rep.trace[0].extras.at("duality_gap")) <= 1e-12);
}

TEST_CASE("conditional gradient approaches the projected gradient solution") {
    Problem p = distance_problem({2.0, 0.0});
    SetSpec ball = SetSpec::l2_ball({0.0, 0.0}, 1.0);
    p.sets.push_back(ball);

    StopRule pg_stop;
    pg_stop.grad_tol = 1e-12;
    pg_stop.max_iters = 200;
    Report pg = projected_gradient(p, ball, {0.0, 0.0}, auto_step(), pg_stop);

    FWConfig cfg;
    cfg.stop.max_iters = 10000;
    Report fw = frank_wolfe(p, {0.0, 0.0}, cfg);
    CHECK(fw.final_f() - pg.final_f() <= 1e-4);
    CHECK(norm(fw.x, Norm::l2) <= 1.0 + 1e-10);

    FWConfig ls = cfg;
    ls.line_search = true;
    ls.stop.grad_tol = 1e-8;
    ls.stop.max_iters = 500;
    Report fw_ls = frank_wolfe(p, {0.0, 0.0}, ls);
    CHECK(fw_ls.status == Status::converged);
    CHECK(fw_ls.final_f() - pg.final_f() <= 1e-7);
}

TEST_CASE("conditional gradient validation") {
    Problem p = distance_problem({2.0, 0.0});
    FWConfig cfg;
    cfg.stop.max_iters = 10;
    SECTION("no lmo and no set") {
        CHECK_THROWS_AS(frank_wolfe(p, {0.0, 0.0}, cfg), CapabilityError);
    }
    SECTION("infeasible start") {
        p.sets.push_back(SetSpec::l2_ball({0.0, 0.0}, 1.0));
        CHECK_THROWS_AS(frank_wolfe(p, {5.0, 0.0}, cfg), FeasibilityError);
    }
}
