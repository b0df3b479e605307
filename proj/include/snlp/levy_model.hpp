#pragma once

#include <optional>
#include <string>
#include <vector>

namespace snlp {

struct CompoundPoissonExp {
    double rate;               // lambda
    double jump_mean_inverse;  // alpha; claim sizes ~ Exp(alpha)
};

enum class VariationClass { Bounded, Unbounded };

// X_t = mu t + sigma B_t - S_t with S a compound Poisson process of
// Exp(alpha) jumps. For sigma = 0, mu is the premium rate c.
class ModelSpec {
public:
    ModelSpec(double mu, double sigma, std::optional<CompoundPoissonExp> jumps = std::nullopt);

    static ModelSpec brownian(double mu, double sigma);
    static ModelSpec cramer_lundberg(double c, double rate, double alpha);
    // X_t = mu t. A nonpositive mu is accepted for path simulation only; scale functions reject it.
    static ModelSpec pure_drift(double mu);

    double mu() const noexcept { return mu_; }
    double sigma() const noexcept { return sigma_; }
    const std::optional<CompoundPoissonExp>& jumps() const noexcept { return jumps_; }
    bool has_jumps() const noexcept { return jumps_.has_value(); }
    double jump_rate() const noexcept { return jumps_ ? jumps_->rate : 0.0; }
    double jump_alpha() const noexcept { return jumps_ ? jumps_->jump_mean_inverse : 0.0; }

    VariationClass variation_class() const noexcept {
        return sigma_ == 0.0 ? VariationClass::Bounded : VariationClass::Unbounded;
    }
    bool bounded_variation() const noexcept { return sigma_ == 0.0; }
    // Drift of the bounded-variation form X_t = c t - S_t; only meaningful when sigma = 0.
    double drift() const noexcept { return mu_; }

    bool simulation_only() const noexcept { return simulation_only_; }
    std::string describe() const;

private:
    bool simulation_only_ = false;
    double mu_;
    double sigma_;
    std::optional<CompoundPoissonExp> jumps_;
};

// psi(theta) for theta >= 0.
double laplace_exponent(const ModelSpec& model, double theta);

// psi and its derivatives on the analytic domain theta > -alpha (all reals without jumps).
double psi_ext(const ModelSpec& model, double theta);
double psi_prime(const ModelSpec& model, double theta);
double psi_second(const ModelSpec& model, double theta);
double psi_third(const ModelSpec& model, double theta);

struct PhiValue {
    double q;
    double value;
    double residual;
};

PhiValue phi_inverse(const ModelSpec& model, double q);

ModelSpec drift_changed(const ModelSpec& model, double delta);

// lim e^{-Phi(q) x} W^(q)(x) = 1 / psi'(Phi(q)).
double asymptotic_w(const ModelSpec& model, double q);

// One term (a + b x) e^{r x} of an exponential-polynomial sum.
struct ExpTerm {
    double r;
    double a;
    double b;
};

// W^(q) and Z^(q) of a model in closed form: W(x) = sum_k (a_k + b_k x) e^{r_k x}
// for x >= 0, where r_k are the roots of psi(theta) = q (b_k != 0 only for a double root).
class ScaleFunction {
public:
    ScaleFunction(const ModelSpec& model, double q);

    const ModelSpec& model() const noexcept { return model_; }
    double q() const noexcept { return q_; }
    double phi() const noexcept { return phi_; }
    const std::vector<ExpTerm>& terms() const noexcept { return terms_; }

    double w(double x) const;
    // Right derivative; W'(0+) at x = 0.
    double w_prime(double x) const;
    double z(double x) const;
    double w0() const noexcept { return w0_; }
    double w_prime0() const noexcept { return wp0_; }
    // e^{-Phi x} W(x), finite for all x >= 0.
    double w_scaled(double x) const;

    // Terms of W' in the same representation.
    std::vector<ExpTerm> derivative_terms() const;

private:
    ModelSpec model_;
    double q_;
    double phi_;
    std::vector<ExpTerm> terms_;
    std::size_t lead_ = 0;  // index of the Phi term
    double w0_ = 0.0;
    double wp0_ = 0.0;
};

double base_scale_w(const ModelSpec& model, double q, double x);
double base_scale_w_prime(const ModelSpec& model, double q, double x);
double base_scale_z(const ModelSpec& model, double q, double x);

}  // namespace snlp
