#include "snlp/montecarlo.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include <boost/random/normal_distribution.hpp>

#include "snlp/errors.hpp"

namespace snlp {

std::uint64_t worker_seed(std::uint64_t seed, int worker) {
    std::uint64_t z = seed + static_cast<std::uint64_t>(worker + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

// Paths stop once the discount e^{-int omega} drops below 1e-10.
const double kLogDiscountFloor = std::log(1e10);

struct PathResult {
    double value = 0.0;
    bool truncated = false;
    bool up = false;
    bool overshoot = false;
};

struct Sums {
    double sum = 0.0;
    double sumsq = 0.0;
    long truncated = 0;
    long ups = 0;
    long overshoots = 0;
};

class PathEngine {
public:
    PathEngine(const ProcessKind& k, const PathConfig& c, const SimDomain& d)
        : kind_(k), cfg_(c), dom_(d), sigma_(k.base.sigma()), mu_(k.base.mu()) {
        lambda_ = k.base.has_jumps() ? k.base.jump_rate() : 0.0;
        alpha_ = k.base.has_jumps() ? k.base.jump_alpha() : 1.0;
        bound_ = 6.0 * sigma_ * std::sqrt(c.dt) + std::abs(mu_) * c.dt;
        sqrt_dt_ = std::sqrt(c.dt);
        omega_const_ = k.omega.is_constant() && !k.omega.left_tail_value();
        omega_value_ = k.omega.constant_value();
        rate_zero_ = k.rate.is_zero();
        floor_ = d.reflect_below.value_or(-std::numeric_limits<double>::infinity());
        ceiling_ = d.reflect_above.value_or(std::numeric_limits<double>::infinity());
    }

    template <class Rng, class Visit>
    PathResult run(Rng& rng, double x0, double T, Functional f, double lo, double hi, Visit&& visit) const {
        boost::random::normal_distribution<double> normal;
        std::exponential_distribution<double> clock(lambda_ > 0.0 ? lambda_ : 1.0);
        std::exponential_distribution<double> size(alpha_);
        PathResult r;
        double x = x0, t = 0.0, integral = 0.0, pushed = 0.0;
        reflect(x, pushed);
        auto finish_exit = [&](bool up) {
            r.up = up;
            if ((up && f == Functional::ExitUp) || (!up && f == Functional::ExitDown)) r.value = std::exp(-integral);
            if (up && x - dom_.upper > bound_) r.overshoot = true;
            return r;
        };
        if (x >= dom_.upper) return finish_exit(true);
        if (x < dom_.lower) return finish_exit(false);
        visit(t, x, pushed);
        const bool occupation = f == Functional::Occupation;

        if (lambda_ == 0.0) {
            const double noise = sigma_ * sqrt_dt_;
            while (t < T) {
                double tau = std::min(cfg_.dt, T - t);
                if (occupation && x >= lo && x < hi) r.value += tau * std::exp(-integral);
                integral += omega_at(x) * tau;
                x += drift_at(x) * tau + (tau == cfg_.dt ? noise : sigma_ * std::sqrt(tau)) * normal(rng);
                reflect(x, pushed);
                t = tau == cfg_.dt ? t + tau : T;
                if (x >= dom_.upper) return finish_exit(true);
                if (x < dom_.lower) return finish_exit(false);
                visit(t, x, pushed);
                if (integral > kLogDiscountFloor) return r;
            }
            r.truncated = true;
            return r;
        }

        double next_jump = clock(rng);
        while (t < T) {
            double step_end = std::min(t + cfg_.dt, T);
            // continuous segments split at jump epochs
            while (t < step_end) {
                double seg_end = std::min(step_end, next_jump);
                double tau = seg_end - t;
                if (tau > 0.0) {
                    if (occupation && x >= lo && x < hi) r.value += tau * std::exp(-integral);
                    integral += omega_at(x) * tau;
                    x += drift_at(x) * tau;
                    if (sigma_ > 0.0) x += sigma_ * (tau == cfg_.dt ? sqrt_dt_ : std::sqrt(tau)) * normal(rng);
                    reflect(x, pushed);
                    t = seg_end;
                    if (x >= dom_.upper) return finish_exit(true);
                    if (x < dom_.lower) return finish_exit(false);
                }
                if (next_jump <= step_end && t >= next_jump) {
                    x -= size(rng);
                    reflect(x, pushed);
                    next_jump += clock(rng);
                    if (x < dom_.lower) return finish_exit(false);
                }
            }
            visit(t, x, pushed);
            if (integral > kLogDiscountFloor) return r;
        }
        r.truncated = true;
        return r;
    }

private:
    double omega_at(double x) const { return omega_const_ ? omega_value_ : kind_.omega.value(x); }
    double drift_at(double x) const { return rate_zero_ ? mu_ : mu_ - kind_.rate.value(x); }

    void reflect(double& x, double& pushed) const {
        if (x < floor_) {
            pushed += floor_ - x;
            x = floor_;
        } else if (x > ceiling_) {
            pushed += x - ceiling_;
            x = ceiling_;
        }
    }

    const ProcessKind& kind_;
    const PathConfig& cfg_;
    const SimDomain& dom_;
    double sigma_, mu_, lambda_ = 0.0, alpha_ = 1.0, bound_ = 0.0, sqrt_dt_ = 0.0;
    bool omega_const_ = false, rate_zero_ = false;
    double omega_value_ = 0.0;
    double floor_, ceiling_;
};

void check_dt(const PathConfig& cfg, const SimDomain& dom) {
    double width = dom.upper - dom.lower;
    if (dom.reflect_below && std::isfinite(dom.upper)) width = std::min(width, dom.upper - *dom.reflect_below);
    if (dom.reflect_above && std::isfinite(dom.lower)) width = std::min(width, *dom.reflect_above - dom.lower);
    if (cfg.dt > 1e-2 * std::min(1.0, width) * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "monte carlo: dt=" << cfg.dt << " exceeds 1e-2 * min(1, interval width " << width << ")";
        throw PreconditionError(os.str());
    }
}

}  // namespace

MonteCarlo::MonteCarlo(ProcessKind kind, PathConfig cfg) : kind_(std::move(kind)), cfg_(cfg) {
    if (cfg_.n_paths <= 0) throw DomainError("monte carlo: n_paths must be positive");
    if (!(cfg_.dt > 0.0) || !std::isfinite(cfg_.dt)) throw DomainError("monte carlo: dt must be positive");
    if (!(cfg_.horizon > 0.0)) throw DomainError("monte carlo: horizon must be positive");
    if (cfg_.workers < 1) throw DomainError("monte carlo: workers must be >= 1");
    if (!kind_.base.simulation_only()) kind_.rate.check_against(kind_.base);
}

Estimate MonteCarlo::estimate(double x0, const SimDomain& dom, Functional f, double bin_lo, double bin_hi) const {
    check_dt(cfg_, dom);
    const int W = cfg_.workers;
    std::vector<Sums> sums(static_cast<std::size_t>(W));
    auto work = [&](int w) {
        long count = cfg_.n_paths / W + (w < cfg_.n_paths % W ? 1 : 0);
        std::mt19937_64 rng(worker_seed(cfg_.seed, w));
        PathEngine eng(kind_, cfg_, dom);
        Sums& s = sums[static_cast<std::size_t>(w)];
        for (long i = 0; i < count; ++i) {
            PathResult r = eng.run(rng, x0, cfg_.horizon, f, bin_lo, bin_hi, [](double, double, double) {});
            s.sum += r.value;
            s.sumsq += r.value * r.value;
            s.truncated += r.truncated;
            s.ups += r.up;
            s.overshoots += r.overshoot;
        }
    };
    if (W == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < W; ++w) threads.emplace_back(work, w);
        for (auto& th : threads) th.join();
    }
    Sums total;
    for (const Sums& s : sums) {
        total.sum += s.sum;
        total.sumsq += s.sumsq;
        total.truncated += s.truncated;
        total.ups += s.ups;
        total.overshoots += s.overshoots;
    }
    Estimate e;
    const double n = static_cast<double>(cfg_.n_paths);
    e.n = cfg_.n_paths;
    e.mean = total.sum / n;
    double var = n > 1 ? std::max(0.0, (total.sumsq - n * e.mean * e.mean) / (n - 1)) : 0.0;
    e.std_error = std::sqrt(var / n);
    e.truncated_fraction = total.truncated / n;
    e.dt = cfg_.dt;
    e.seed = cfg_.seed;
    e.workers = W;
    e.overshoot_exceed_fraction = total.ups > 0 ? static_cast<double>(total.overshoots) / total.ups : 0.0;
    if (e.truncated_fraction > 0.01) {
        std::ostringstream os;
        os << "truncated fraction " << e.truncated_fraction << " exceeds 1% at horizon " << cfg_.horizon;
        e.warnings.push_back(os.str());
    }
    return e;
}

Estimate MonteCarlo::exit_two_sided(double x, double lower, double a, bool up) const {
    if (!(lower <= x && x <= a)) throw DomainError("monte carlo exit: need lower <= x <= a");
    SimDomain d;
    d.lower = lower;
    d.upper = a;
    return estimate(x, d, up ? Functional::ExitUp : Functional::ExitDown);
}

Estimate MonteCarlo::exit_one_sided_up(double x, double a) const {
    if (!(x <= a)) throw DomainError("monte carlo exit: need x <= a");
    SimDomain d;
    d.upper = a;
    return estimate(x, d, Functional::ExitUp);
}

Estimate MonteCarlo::exit_one_sided_down(double x, double lower) const {
    SimDomain d;
    d.lower = lower;
    return estimate(x, d, Functional::ExitDown);
}

Estimate MonteCarlo::reflected_exit(double x, double a) const {
    if (!(0.0 <= x && x <= a)) throw DomainError("monte carlo reflected exit: need 0 <= x <= a");
    SimDomain d;
    if (kind_.reflected == Reflection::AtInfimum) {
        d.reflect_below = 0.0;
        d.upper = a;
        return estimate(x, d, Functional::ExitUp);
    }
    if (kind_.reflected == Reflection::AtSupremum) {
        d.reflect_above = a;
        d.lower = 0.0;
        return estimate(a - x, d, Functional::ExitDown);
    }
    throw PreconditionError("monte carlo reflected exit: process is not reflected");
}

Estimate MonteCarlo::occupation(double x, double y_lo, double y_hi, double lower, double a) const {
    if (!(lower <= x && x <= a)) throw DomainError("monte carlo occupation: need lower <= x <= a");
    SimDomain d;
    d.lower = lower;
    d.upper = a;
    return estimate(x, d, Functional::Occupation, y_lo, y_hi);
}

Estimate MonteCarlo::reflected_occupation(double x, double y_lo, double y_hi, double a) const {
    if (!(0.0 <= x && x <= a)) throw DomainError("monte carlo occupation: need 0 <= x <= a");
    SimDomain d;
    if (kind_.reflected == Reflection::AtInfimum) {
        d.reflect_below = 0.0;
        d.upper = a;
        return estimate(x, d, Functional::Occupation, y_lo, y_hi);
    }
    if (kind_.reflected == Reflection::AtSupremum) {
        d.reflect_above = a;
        d.lower = 0.0;
        // Yhat in [y_lo, y_hi) is L in (a - y_hi, a - y_lo]; nudge to the half-open test.
        double lo = std::nextafter(a - y_hi, std::numeric_limits<double>::infinity());
        double hi = std::nextafter(a - y_lo, std::numeric_limits<double>::infinity());
        return estimate(a - x, d, Functional::Occupation, lo, hi);
    }
    throw PreconditionError("monte carlo occupation: process is not reflected");
}

std::vector<TracePoint> MonteCarlo::simulate_path(double x0, double T, const SimDomain& dom,
                                                  std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    PathEngine eng(kind_, cfg_, dom);
    std::vector<TracePoint> out;
    eng.run(rng, x0, T, Functional::ExitUp, 0.0, 0.0,
            [&](double t, double x, double pushed) { out.push_back({t, x, pushed}); });
    return out;
}

}  // namespace snlp
