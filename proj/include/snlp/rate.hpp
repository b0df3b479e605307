#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snlp/levy_model.hpp"
#include "snlp/volterra.hpp"

namespace snlp {

struct StepLevel {
    double b;
    double delta;
};

// Piecewise-linear samples, extended by the boundary values.
struct Samples {
    std::vector<double> xs;
    std::vector<double> values;

    double at(double x) const;
};

// Refraction rate phi: nondecreasing, zero on (-inf, d'].
class RateFunction {
public:
    enum class Kind { Zero, Steps, Sampled };

    static RateFunction zero();
    static RateFunction steps(std::vector<StepLevel> levels);
    static RateFunction sampled(std::vector<double> xs, std::vector<double> values);

    Kind kind() const noexcept { return kind_; }
    bool is_zero() const noexcept { return kind_ == Kind::Zero; }
    const std::vector<StepLevel>& levels() const noexcept { return levels_; }
    const Samples& samples() const noexcept { return samples_; }

    double value(double x) const;
    double left_limit(double x) const;
    double right_limit(double x) const;
    double d_prime() const noexcept { return d_prime_; }
    double sup() const noexcept;
    // Points where phi jumps.
    std::vector<double> jumps() const;
    bool deltas_increasing() const;

    NodeSamples sample(const Grid& grid) const;
    // Throws ConstraintError if sup phi >= c for a bounded-variation model.
    void check_against(const ModelSpec& model) const;
    std::string describe() const;

private:
    Kind kind_ = Kind::Zero;
    std::vector<StepLevel> levels_;
    Samples samples_;
    double d_prime_ = 0.0;
};

// Killing intensity omega, optionally fixed to p on (-inf, 0].
class OmegaFunction {
public:
    enum class Kind { Constant, Steps, Sampled };

    static OmegaFunction constant(double q);
    // base + sum_j delta_j 1{x > b_j}; deltas may have either sign.
    static OmegaFunction steps(double base, std::vector<StepLevel> levels);
    static OmegaFunction sampled(std::vector<double> xs, std::vector<double> values);
    OmegaFunction with_left_tail(double p) const;

    Kind kind() const noexcept { return kind_; }
    bool is_constant() const noexcept;
    double constant_value() const noexcept { return base_; }
    const std::optional<double>& left_tail_value() const noexcept { return left_tail_; }
    double base() const noexcept { return base_; }
    const std::vector<StepLevel>& levels() const noexcept { return levels_; }
    const Samples& samples() const noexcept { return samples_; }

    double value(double x) const;
    double left_limit(double x) const;
    double right_limit(double x) const;
    double min_value() const noexcept;
    double max_value() const noexcept;
    std::vector<double> jumps() const;

    NodeSamples sample(const Grid& grid) const;
    std::string describe() const;

private:
    double core(double x, bool right) const;

    Kind kind_ = Kind::Constant;
    double base_ = 0.0;
    std::vector<StepLevel> levels_;
    Samples samples_;
    std::optional<double> left_tail_;
};

// Xi(x) = 1 - W^(q)(0) phi(x); W^(q)(0) = 1/c for bounded variation, 0 otherwise.
double xi(const ModelSpec& model, double q, const RateFunction& rate, double x);
NodeSamples xi_samples(const ModelSpec& model, const RateFunction& rate, const Grid& grid);

// Jump points of phi/omega that do not fall on grid nodes.
std::vector<double> misaligned_jumps(const Grid& grid, const std::vector<double>& points);

}  // namespace snlp
