#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "descentforge/core.hpp"
#include "descentforge/rng.hpp"

namespace descentforge {

// ---------------------------------------------------------------------------
// batch sampling
// ---------------------------------------------------------------------------

enum class BatchMode { without_replacement, with_replacement };

struct BatchPlan {
    std::size_t n = 0;
    std::size_t b = 1;
    BatchMode mode = BatchMode::without_replacement;
    std::uint64_t seed = 0;
    bool allow_partial = false;  // keep the n mod b leftover as a trailing batch
};

/// One epoch's batches.  without_replacement shuffles 0..n-1 and slices it
/// into floor(n/b) disjoint batches, dropping the remainder unless
/// allow_partial is set; with_replacement draws every index independently.
/// Indices within a batch are sorted so accumulation order is canonical.
/// Distinct epochs reshuffle deterministically from (seed, epoch).
inline std::vector<std::vector<std::size_t>> sample_batches(const BatchPlan& plan,
                                                            std::uint64_t epoch = 0) {
    if (plan.n == 0) throw ParameterError("sample_batches: n must be positive");
    if (plan.b == 0 || plan.b > plan.n)
        throw ParameterError("sample_batches: batch size must be in [1, n]");

    Rng rng(plan.seed + 0x9e3779b97f4a7c15ULL * epoch, "batches");
    std::size_t count = plan.n / plan.b;
    std::vector<std::vector<std::size_t>> batches;

    if (plan.mode == BatchMode::with_replacement) {
        batches.resize(count);
        for (auto& batch : batches) {
            batch.resize(plan.b);
            for (auto& idx : batch) idx = rng.below(plan.n);
            std::sort(batch.begin(), batch.end());
        }
        return batches;
    }

    std::vector<std::size_t> perm(plan.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::size_t> batch(perm.begin() + static_cast<std::ptrdiff_t>(i * plan.b),
                                       perm.begin() + static_cast<std::ptrdiff_t>((i + 1) * plan.b));
        std::sort(batch.begin(), batch.end());
        batches.push_back(std::move(batch));
    }
    if (plan.allow_partial && plan.n % plan.b != 0) {
        std::vector<std::size_t> tail(perm.begin() + static_cast<std::ptrdiff_t>(count * plan.b),
                                      perm.end());
        std::sort(tail.begin(), tail.end());
        batches.push_back(std::move(tail));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct StochConfig {
    StepSchedule schedule = StepSchedule::constant;
    double eta0 = 0.1;
    double gamma = 0.9;     // rmsprop forgetting factor
    double gamma1 = 0.9;    // adam first-moment forgetting
    double gamma2 = 0.999;  // adam second-moment forgetting
    double eps = 1e-8;      // stability offset under the square root
    bool elementwise_v = false;  // adam: per-coordinate v instead of the scalar form
    long long svrg_m = 1;
    StopRule stop;
    std::uint64_t seed = 0;
};

namespace detail {

inline void require_terms(const Oracle& oracle, const char* who) {
    if (!oracle.term_gradient || oracle.term_count == 0)
        throw CapabilityError(std::string(who) + ": oracle lacks term gradients");
}

inline void validate_stoch(const StochConfig& config, const Vector& x0, const char* who) {
    if (!(config.eta0 > 0.0))
        throw ParameterError(std::string(who) + ": eta0 must be positive");
    if (config.gamma < 0.0 || config.gamma > 1.0 || config.gamma1 < 0.0 ||
        config.gamma1 > 1.0 || config.gamma2 < 0.0 || config.gamma2 > 1.0)
        throw ParameterError(std::string(who) + ": forgetting factors must lie in [0,1]");
    if (config.eps < 0.0) throw ParameterError(std::string(who) + ": eps must be nonnegative");
    if (!config.stop.any_enabled())
        throw ParameterError(std::string(who) + ": no stopping criterion enabled");
    if (!all_finite(x0)) throw ParameterError(std::string(who) + ": x0 is not finite");
}

/// Objective value for tracing: the full oracle value when present, otherwise
/// the finite-sum mean, otherwise NaN (value is then not part of the contract).
inline double trace_value(const Oracle& oracle, const Vector& x) {
    if (oracle.value) return oracle.value(x);
    if (oracle.term_value) {
        double s = 0.0;
        for (std::size_t i = 0; i < oracle.term_count; ++i) s += oracle.term_value(i, x);
        return s / static_cast<double>(oracle.term_count);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline Vector full_mean_gradient(const Oracle& oracle, const Vector& x) {
    Vector g(x.size(), 0.0);
    for (std::size_t i = 0; i < oracle.term_count; ++i)
        axpy(1.0, oracle.term_gradient(i, x), g);
    for (double& v : g) v /= static_cast<double>(oracle.term_count);
    return g;
}

/// The full gradient is unavailable mid-run, so the gradient-tolerance
/// criterion tracks an exponential moving average (window 20) of the sampled
/// gradient norms instead of the raw per-sample value stored in the trace.
class EmaGradNorm {
public:
    double update(double gn) {
        ema_ = seen_ ? ema_ + kAlpha * (gn - ema_) : gn;
        seen_ = true;
        return ema_;
    }
    double value() const { return ema_; }

private:
    static constexpr double kAlpha = 2.0 / 21.0;
    double ema_ = 0.0;
    bool seen_ = false;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// stochastic gradient descent
// ---------------------------------------------------------------------------

/// x <- x - eta_k grad f_i(x) with i sampled uniformly per iteration.
/// gnorm in the trace is the raw sampled-gradient norm; the grad_tol stop
/// criterion is applied to its moving average (extras["gnorm_ema"]).
inline Report sgd(const Problem& problem, const StochConfig& config, Vector x0) {
    const Oracle& oracle = problem.oracle;
    detail::require_terms(oracle, "sgd");
    detail::validate_stoch(config, x0, "sgd");

    Rng rng(config.seed, "sgd");
    detail::EmaGradNorm ema;
    StopRule tail_rule = config.stop;
    tail_rule.grad_tol = 0.0;

    Report rep;
    rep.x = std::move(x0);
    Vector prev_x = rep.x;
    double step_taken = 0.0;

    for (long long k = 0;; ++k) {
        std::size_t i = rng.below(oracle.term_count);
        Vector g = oracle.term_gradient(i, rep.x);
        double gn = norm(g, Norm::l2);

        TraceRecord rec;
        rec.k = k;
        rec.f = detail::trace_value(oracle, rep.x);
        rec.gnorm = gn;
        rec.step = step_taken;
        rec.extras["sampled_index"] = static_cast<double>(i);
        rec.extras["gnorm_ema"] = ema.update(gn);

        bool finite = all_finite(rep.x) && all_finite(g) && !std::isnan(gn);
        StopReason why = push_trace(rep, tail_rule, rec);
        if (!finite ||
            ((oracle.value || oracle.term_value) && !std::isfinite(rep.trace.back().f))) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why == StopReason::none && config.stop.grad_tol > 0.0 &&
            ema.value() <= config.stop.grad_tol)
            why = StopReason::grad_tol;
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        step_taken = schedule_eta(config.schedule, config.eta0, k + 1);
        axpy(-step_taken, g, rep.x);
    }
    return rep;
}

/// Mini-batch SGD: x <- x - eta_k (1/b) sum_{i in B} grad f_i(x), batches
/// drawn per epoch from the plan.  Each record carries the batch ordinal
/// within its epoch ("batch_id") and the squared batch-gradient error
/// ("e_norm2") against the full mean gradient.
inline Report minibatch_sgd(const Problem& problem, const StochConfig& config,
                            const BatchPlan& plan, Vector x0) {
    const Oracle& oracle = problem.oracle;
    detail::require_terms(oracle, "minibatch_sgd");
    detail::validate_stoch(config, x0, "minibatch_sgd");
    if (plan.n != oracle.term_count)
        throw ParameterError("minibatch_sgd: plan.n must equal the oracle term count");

    detail::EmaGradNorm ema;
    StopRule tail_rule = config.stop;
    tail_rule.grad_tol = 0.0;

    Report rep;
    rep.x = std::move(x0);
    Vector prev_x = rep.x;
    double step_taken = 0.0;

    std::uint64_t epoch = 0;
    std::vector<std::vector<std::size_t>> batches = sample_batches(plan, epoch);
    std::size_t cursor = 0;

    for (long long k = 0;; ++k) {
        if (cursor == batches.size()) {
            batches = sample_batches(plan, ++epoch);
            cursor = 0;
        }
        const std::vector<std::size_t>& batch = batches[cursor];

        Vector g(rep.x.size(), 0.0);
        for (std::size_t idx : batch) axpy(1.0, oracle.term_gradient(idx, rep.x), g);
        for (double& v : g) v /= static_cast<double>(batch.size());
        double gn = norm(g, Norm::l2);

        TraceRecord rec;
        rec.k = k;
        rec.f = detail::trace_value(oracle, rep.x);
        rec.gnorm = gn;
        rec.step = step_taken;
        rec.extras["batch_id"] = static_cast<double>(cursor);
        rec.extras["e_norm2"] = [&] {
            Vector e = sub(g, detail::full_mean_gradient(oracle, rep.x));
            return dot(e, e);
        }();
        rec.extras["gnorm_ema"] = ema.update(gn);

        bool finite = all_finite(rep.x) && all_finite(g) && !std::isnan(gn);
        StopReason why = push_trace(rep, tail_rule, rec);
        if (!finite ||
            ((oracle.value || oracle.term_value) && !std::isfinite(rep.trace.back().f))) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why == StopReason::none && config.stop.grad_tol > 0.0 &&
            ema.value() <= config.stop.grad_tol)
            why = StopReason::grad_tol;
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        step_taken = schedule_eta(config.schedule, config.eta0, k + 1);
        axpy(-step_taken, g, rep.x);
        ++cursor;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// stochastic average gradient
// ---------------------------------------------------------------------------

/// Keeps a table of the last-seen gradient of every term (zero before first
/// visit) plus their running sum; each iteration refreshes one sampled entry
/// and steps by -(eta_k / n) times the refreshed sum.  The final table sum is
/// exported as aux["sag_table_sum"].
inline Report sag(const Problem& problem, const StochConfig& config, Vector x0) {
    const Oracle& oracle = problem.oracle;
    detail::require_terms(oracle, "sag");
    detail::validate_stoch(config, x0, "sag");

    const std::size_t n = oracle.term_count;
    Rng rng(config.seed, "sag");
    detail::EmaGradNorm ema;
    StopRule tail_rule = config.stop;
    tail_rule.grad_tol = 0.0;

    Report rep;
    rep.x = std::move(x0);
    Vector prev_x = rep.x;
    double step_taken = 0.0;

    std::vector<Vector> table(n, Vector(rep.x.size(), 0.0));
    Vector table_sum(rep.x.size(), 0.0);

    for (long long k = 0;; ++k) {
        std::size_t j = rng.below(n);
        Vector g = oracle.term_gradient(j, rep.x);
        for (std::size_t c = 0; c < table_sum.size(); ++c)
            table_sum[c] += g[c] - table[j][c];
        table[j] = g;
        double gn = norm(g, Norm::l2);

        TraceRecord rec;
        rec.k = k;
        rec.f = detail::trace_value(oracle, rep.x);
        rec.gnorm = gn;
        rec.step = step_taken;
        rec.extras["sampled_index"] = static_cast<double>(j);
        rec.extras["gnorm_ema"] = ema.update(gn);

        bool finite = all_finite(rep.x) && all_finite(table_sum);
        StopReason why = push_trace(rep, tail_rule, rec);
        if (!finite ||
            ((oracle.value || oracle.term_value) && !std::isfinite(rep.trace.back().f))) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why == StopReason::none && config.stop.grad_tol > 0.0 &&
            ema.value() <= config.stop.grad_tol)
            why = StopReason::grad_tol;
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        step_taken = schedule_eta(config.schedule, config.eta0, k + 1);
        axpy(-step_taken / static_cast<double>(n), table_sum, rep.x);
    }
    rep.aux["sag_table_sum"] = table_sum;
    return rep;
}

// ---------------------------------------------------------------------------
// stochastic variance reduced gradient
// ---------------------------------------------------------------------------

/// Outer iterations anchor a snapshot x~ and its full mean gradient; an inner
/// loop of svrg_m corrected steps
///   x <- x - eta (grad f_j(x) - grad f_j(x~) + grad f(x~))
/// follows, and the last inner iterate becomes the next snapshot.  One trace
/// record per outer iteration, with the exact full-gradient norm, so grad_tol
/// applies directly.
inline Report svrg(const Problem& problem, const StochConfig& config, Vector x0) {
    const Oracle& oracle = problem.oracle;
    detail::require_terms(oracle, "svrg");
    detail::validate_stoch(config, x0, "svrg");
    if (config.svrg_m < 1) throw ParameterError("svrg: svrg_m must be at least 1");

    const std::size_t n = oracle.term_count;
    Rng rng(config.seed, "svrg");

    Report rep;
    rep.x = std::move(x0);
    Vector prev_x = rep.x;
    double step_taken = 0.0;

    for (long long k = 0;; ++k) {
        Vector full = detail::full_mean_gradient(oracle, rep.x);

        TraceRecord rec;
        rec.k = k;
        rec.f = detail::trace_value(oracle, rep.x);
        rec.gnorm = norm(full, Norm::l2);
        rec.step = step_taken;

        bool finite = all_finite(rep.x) && all_finite(full) && !std::isnan(*rec.gnorm);
        StopReason why = push_trace(rep, config.stop, rec);
        if (!finite ||
            ((oracle.value || oracle.term_value) && !std::isfinite(rep.trace.back().f))) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        Vector snapshot = rep.x;
        for (long long tau = 0; tau < config.svrg_m; ++tau) {
            std::size_t j = rng.below(n);
            Vector gj = oracle.term_gradient(j, rep.x);
            Vector gj_snap = oracle.term_gradient(j, snapshot);
            step_taken = schedule_eta(config.schedule, config.eta0, tau + 1);
            for (std::size_t c = 0; c < rep.x.size(); ++c)
                rep.x[c] -= step_taken * (gj[c] - gj_snap[c] + full[c]);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// adaptive step-size family
// ---------------------------------------------------------------------------

enum class AdaptiveVariant { adagrad, rmsprop, adam };

/// AdaGrad divides each coordinate by the root of its accumulated squared
/// sampled partial derivatives; RMSProp replaces the ever-growing sum with a
/// forgetting-factor scalar; Adam adds a bias-corrected first moment.  Adam's
/// default second moment is the scalar squared norm, with elementwise_v for
/// the per-coordinate variant.  When eps and the accumulator are both zero,
/// the raw sampled gradient is used for that update and the record is flagged
/// with extras["div_guard"]=1.
inline Report adaptive_sgd(const Problem& problem, const StochConfig& config,
                           AdaptiveVariant variant, Vector x0) {
    const Oracle& oracle = problem.oracle;
    detail::require_terms(oracle, "adaptive_sgd");
    detail::validate_stoch(config, x0, "adaptive_sgd");

    const std::size_t d = x0.size();
    Rng rng(config.seed, "adaptive_sgd");
    detail::EmaGradNorm ema;
    StopRule tail_rule = config.stop;
    tail_rule.grad_tol = 0.0;

    Report rep;
    rep.x = std::move(x0);
    Vector prev_x = rep.x;
    double step_taken = 0.0;

    Vector accum(d, 0.0);  // adagrad sums, or adam elementwise v
    Vector m(d, 0.0);      // adam first moment
    double v = 0.0;        // rmsprop / adam scalar second moment

    for (long long k = 0;; ++k) {
        std::size_t i = rng.below(oracle.term_count);
        Vector g = oracle.term_gradient(i, rep.x);
        double gn = norm(g, Norm::l2);

        Vector update(d, 0.0);
        bool guarded = false;
        switch (variant) {
            case AdaptiveVariant::adagrad: {
                for (std::size_t c = 0; c < d; ++c) {
                    accum[c] += g[c] * g[c];
                    double divisor = std::sqrt(config.eps + accum[c]);
                    if (divisor == 0.0) {
                        update[c] = g[c];
                        guarded = true;
                    } else {
                        update[c] = g[c] / divisor;
                    }
                }
                break;
            }
            case AdaptiveVariant::rmsprop: {
                v = config.gamma * v + (1.0 - config.gamma) * gn * gn;
                double divisor = std::sqrt(config.eps + v);
                if (divisor == 0.0) {
                    update = g;
                    guarded = true;
                } else {
                    update = scaled(1.0 / divisor, g);
                }
                break;
            }
            case AdaptiveVariant::adam: {
                double c1 = config.gamma1 == 1.0
                                ? 1.0
                                : 1.0 / (1.0 - std::pow(config.gamma1, static_cast<double>(k + 1)));
                double c2 = config.gamma2 == 1.0
                                ? 1.0
                                : 1.0 / (1.0 - std::pow(config.gamma2, static_cast<double>(k + 1)));
                for (std::size_t c = 0; c < d; ++c)
                    m[c] = config.gamma1 * m[c] + (1.0 - config.gamma1) * g[c];
                if (config.elementwise_v) {
                    for (std::size_t c = 0; c < d; ++c) {
                        accum[c] = config.gamma2 * accum[c] + (1.0 - config.gamma2) * g[c] * g[c];
                        double divisor = std::sqrt(config.eps + c2 * accum[c]);
                        if (divisor == 0.0) {
                            update[c] = g[c];
                            guarded = true;
                        } else {
                            update[c] = c1 * m[c] / divisor;
                        }
                    }
                } else {
                    v = config.gamma2 * v + (1.0 - config.gamma2) * gn * gn;
                    double divisor = std::sqrt(config.eps + c2 * v);
                    if (divisor == 0.0) {
                        update = g;
                        guarded = true;
                    } else {
                        update = scaled(c1 / divisor, m);
                    }
                }
                break;
            }
        }

        TraceRecord rec;
        rec.k = k;
        rec.f = detail::trace_value(oracle, rep.x);
        rec.gnorm = gn;
        rec.step = step_taken;
        rec.extras["sampled_index"] = static_cast<double>(i);
        rec.extras["gnorm_ema"] = ema.update(gn);
        if (guarded) rec.extras["div_guard"] = 1.0;

        bool finite = all_finite(rep.x) && all_finite(update) && !std::isnan(gn);
        StopReason why = push_trace(rep, tail_rule, rec);
        if (!finite ||
            ((oracle.value || oracle.term_value) && !std::isfinite(rep.trace.back().f))) {
            rep.status = Status::diverged;
            rep.stats["diverged_at_k"] = static_cast<double>(k);
            rep.x = prev_x;
            break;
        }
        if (why == StopReason::none && config.stop.grad_tol > 0.0 &&
            ema.value() <= config.stop.grad_tol)
            why = StopReason::grad_tol;
        if (why != StopReason::none) {
            rep.status = status_from(why);
            break;
        }

        prev_x = rep.x;
        step_taken = schedule_eta(config.schedule, config.eta0, k + 1);
        axpy(-step_taken, update, rep.x);
    }
    return rep;
}

}  // namespace descentforge
