#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "snlp/identities.hpp"

namespace snlp {

struct PathConfig {
    double dt = 1e-4;
    double horizon = 50.0;
    std::uint64_t seed = 42;
    long n_paths = 100000;
    int workers = 1;
};

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    long n = 0;
    double truncated_fraction = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    int workers = 1;
    // Up-exits whose overshoot beyond the barrier exceeds 6 sigma sqrt(dt) + |drift| dt.
    double overshoot_exceed_fraction = 0.0;
    std::vector<std::string> warnings;
};

// Killing barriers and reflection levels of the simulated state.
struct SimDomain {
    double lower = -std::numeric_limits<double>::infinity();  // exit when state < lower
    double upper = std::numeric_limits<double>::infinity();   // exit when state >= upper
    std::optional<double> reflect_below;                      // state <- max(state, level)
    std::optional<double> reflect_above;                      // state <- min(state, level)
};

enum class Functional { ExitUp, ExitDown, Occupation };

struct TracePoint {
    double t;
    double state;
    double pushed;  // cumulative reflection
};

// Per-worker seed: splitmix64 of seed + (worker + 1) * golden gamma.
std::uint64_t worker_seed(std::uint64_t seed, int worker);

class MonteCarlo {
public:
    MonteCarlo(ProcessKind kind, PathConfig cfg);

    const PathConfig& config() const noexcept { return cfg_; }

    // E[e^{-int omega} 1{exit}] or E[int e^{-int omega} 1{state in [bin_lo, bin_hi)} dt].
    Estimate estimate(double x0, const SimDomain& dom, Functional f, double bin_lo = 0.0, double bin_hi = 0.0) const;

    Estimate exit_two_sided(double x, double lower, double a, bool up) const;
    Estimate exit_one_sided_up(double x, double a) const;
    Estimate exit_one_sided_down(double x, double lower) const;
    // Uses kind.reflected; the supremum case runs L = a - Yhat reflected from above at a.
    Estimate reflected_exit(double x, double a) const;
    Estimate occupation(double x, double y_lo, double y_hi, double lower, double a) const;
    // Bin in the reflected coordinate; for the supremum it includes the atom at 0 when y_lo = 0.
    Estimate reflected_occupation(double x, double y_lo, double y_hi, double a) const;

    // One path on [0, T], recording every step.
    std::vector<TracePoint> simulate_path(double x0, double T, const SimDomain& dom, std::uint64_t seed) const;

private:
    ProcessKind kind_;
    PathConfig cfg_;
};

}  // namespace snlp
