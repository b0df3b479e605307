#include "snlp/levy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "snlp/errors.hpp"

namespace snlp {

namespace {

constexpr double kMergeTol = 1e-6;
constexpr double kAsymptoticSwitch = 30.0;

double bisect(const ModelSpec& m, double q, double lo, double hi) {
    // Invariant: psi(lo) - q <= 0 < psi(hi) - q, or the reverse; sign decides.
    double flo = psi_ext(m, lo) - q;
    for (int it = 0; it < 400; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        double fm = psi_ext(m, mid) - q;
        if ((fm <= 0.0) == (flo <= 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double polish(const ModelSpec& m, double q, double r) {
    for (int it = 0; it < 3; ++it) {
        double f = psi_ext(m, r) - q;
        double d = psi_prime(m, r);
        if (d == 0.0 || !std::isfinite(d)) break;
        double next = r - f / d;
        if (!(std::abs(psi_ext(m, next) - q) < std::abs(f))) break;
        r = next;
    }
    return r;
}

// Real roots of A t^2 + B t + C = 0 (A != 0), computed without cancellation.
void quadratic_roots(double A, double B, double C, double& r1, double& r2) {
    double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) disc = 0.0;
    double s = std::sqrt(disc);
    double qq = -0.5 * (B + std::copysign(s, B));
    if (qq == 0.0) {
        r1 = r2 = 0.0;
        return;
    }
    r1 = qq / A;
    r2 = C / qq;
}

// All real roots of psi(theta) = q, largest (Phi) first.
std::vector<double> roots_of(const ModelSpec& m, double q, double phi) {
    std::vector<double> r{phi};
    double s2 = m.sigma() * m.sigma();
    if (!m.has_jumps()) {
        if (s2 > 0.0) r.push_back(-phi - 2.0 * m.mu() / s2);
    } else if (s2 == 0.0) {
        double c = m.mu(), lam = m.jump_rate(), al = m.jump_alpha();
        // c t^2 + (c al - lam - q) t - q al = 0
        double other = (q > 0.0 && phi > 0.0) ? -q * al / (c * phi) : -(c * al - lam - q) / c - phi;
        r.push_back(polish(m, q, other));
    } else {
        double lam = m.jump_rate(), al = m.jump_alpha();
        double A = 0.5 * s2, B = m.mu() + 0.5 * s2 * al, C = m.mu() * al - q - lam;
        double B2 = B + A * phi;
        double C2 = C + B2 * phi;
        double r1, r2;
        quadratic_roots(A, B2, C2, r1, r2);
        r.push_back(polish(m, q, std::max(r1, r2)));
        r.push_back(polish(m, q, std::min(r1, r2)));
    }
    std::sort(r.begin() + 1, r.end(), std::greater<>());
    return r;
}

double expm1_over(double r, double x) {
    // expm1(r x) / r, with the r -> 0 limit x.
    return r == 0.0 ? x : std::expm1(r * x) / r;
}

// int_0^x s e^{r s} ds
double moment1(double r, double x) {
    double t = r * x;
    if (std::abs(t) < 1e-3) {
        double sum = x * x / 2.0, fact = 1.0;
        for (int n = 1; n < 8; ++n) {
            fact *= n;
            sum += std::pow(r, n) * std::pow(x, n + 2) / (fact * (n + 2));
        }
        return sum;
    }
    return x * std::exp(t) / r - std::expm1(t) / (r * r);
}

}  // namespace

ModelSpec::ModelSpec(double mu, double sigma, std::optional<CompoundPoissonExp> jumps)
    : mu_(mu), sigma_(sigma), jumps_(jumps) {
    if (!std::isfinite(mu) || !std::isfinite(sigma) || sigma < 0.0)
        throw DomainError("model: sigma must be finite and >= 0");
    if (jumps_) {
        if (!(jumps_->rate > 0.0) || !(jumps_->jump_mean_inverse > 0.0))
            throw DomainError("model: jump rate and jump_mean_inverse must be > 0");
    }
    if (sigma_ == 0.0 && !(mu_ > 0.0))
        throw ConstraintError("model: bounded-variation models need drift c > 0");
}

ModelSpec ModelSpec::brownian(double mu, double sigma) {
    if (!(sigma > 0.0)) throw DomainError("brownian model needs sigma > 0");
    return ModelSpec(mu, sigma);
}

ModelSpec ModelSpec::pure_drift(double mu) {
    if (mu > 0.0) return ModelSpec(mu, 0.0);
    if (!std::isfinite(mu)) throw DomainError("model: drift must be finite");
    ModelSpec m(1.0, 0.0);
    m.mu_ = mu;
    m.simulation_only_ = true;
    return m;
}

ModelSpec ModelSpec::cramer_lundberg(double c, double rate, double alpha) {
    return ModelSpec(c, 0.0, CompoundPoissonExp{rate, alpha});
}

std::string ModelSpec::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "mu=" << mu_ << " sigma=" << sigma_;
    if (jumps_) os << " lambda=" << jumps_->rate << " alpha=" << jumps_->jump_mean_inverse;
    return os.str();
}

double psi_ext(const ModelSpec& m, double t) {
    double v = m.mu() * t + 0.5 * m.sigma() * m.sigma() * t * t;
    if (m.has_jumps()) v -= m.jump_rate() * t / (m.jump_alpha() + t);
    return v;
}

double psi_prime(const ModelSpec& m, double t) {
    double v = m.mu() + m.sigma() * m.sigma() * t;
    if (m.has_jumps()) {
        double al = m.jump_alpha(), u = al + t;
        v -= m.jump_rate() * al / (u * u);
    }
    return v;
}

double psi_second(const ModelSpec& m, double t) {
    double v = m.sigma() * m.sigma();
    if (m.has_jumps()) {
        double al = m.jump_alpha(), u = al + t;
        v += 2.0 * m.jump_rate() * al / (u * u * u);
    }
    return v;
}

double psi_third(const ModelSpec& m, double t) {
    if (!m.has_jumps()) return 0.0;
    double al = m.jump_alpha(), u = al + t;
    return -6.0 * m.jump_rate() * al / (u * u * u * u);
}

double laplace_exponent(const ModelSpec& model, double theta) {
    if (!(theta >= 0.0)) throw DomainError("laplace_exponent: theta must be >= 0");
    return psi_ext(model, theta);
}

PhiValue phi_inverse(const ModelSpec& m, double q) {
    if (m.simulation_only()) throw ConstraintError("model: a nonpositive pure drift has no scale function");
    if (!(q >= 0.0) || !std::isfinite(q)) throw DomainError("phi_inverse: q must be >= 0");
    double lo = 0.0;
    if (psi_prime(m, 0.0) < 0.0) {
        // psi dips below zero; start from its minimiser.
        double a = 0.0, b = 1.0;
        while (psi_prime(m, b) < 0.0) b *= 2.0;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            (psi_prime(m, mid) < 0.0 ? a : b) = mid;
        }
        lo = b;
    } else if (q == 0.0) {
        return PhiValue{q, 0.0, 0.0};
    }
    double hi = std::max(1.0, 2.0 * lo);
    while (psi_ext(m, hi) <= q) hi *= 2.0;
    double r = polish(m, q, bisect(m, q, lo, hi));
    return PhiValue{q, r, std::abs(psi_ext(m, r) - q)};
}

ModelSpec drift_changed(const ModelSpec& m, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta))
        throw DomainError("drift_changed: delta must be >= 0");
    if (m.bounded_variation() && !(m.mu() - delta > 0.0)) {
        std::ostringstream os;
        os << "drift_changed: cumulative refraction " << delta << " exhausts drift c=" << m.mu()
           << " (requires delta < c)";
        throw ConstraintError(os.str());
    }
    return ModelSpec(m.mu() - delta, m.sigma(), m.jumps());
}

double asymptotic_w(const ModelSpec& m, double q) {
    double phi = phi_inverse(m, q).value;
    double d = psi_prime(m, phi);
    if (!(d > 1e-14)) throw UndefinedLimitError("asymptotic_w: psi'(Phi(q)) = 0, limit is infinite");
    return 1.0 / d;
}

ScaleFunction::ScaleFunction(const ModelSpec& model, double q) : model_(model), q_(q) {
    if (model.simulation_only()) throw ConstraintError("model: a nonpositive pure drift has no scale function");
    if (!(q >= 0.0)) throw DomainError("scale function: q must be >= 0");
    phi_ = phi_inverse(model, q).value;
    std::vector<double> r = roots_of(model, q, phi_);
    std::vector<bool> used(r.size(), false);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (used[i]) continue;
        std::size_t j = i + 1;
        for (; j < r.size(); ++j)
            if (!used[j] && std::abs(r[i] - r[j]) <= kMergeTol * std::max(1.0, std::abs(r[i]))) break;
        if (j < r.size()) {
            used[i] = used[j] = true;
            double mid = (i == 0) ? r[i] : 0.5 * (r[i] + r[j]);
            double p2 = psi_second(model, mid), p3 = psi_third(model, mid);
            terms_.push_back({mid, -2.0 * p3 / (3.0 * p2 * p2), 2.0 / p2});
        } else {
            used[i] = true;
            terms_.push_back({r[i], 1.0 / psi_prime(model, r[i]), 0.0});
        }
    }
    lead_ = 0;
    w0_ = model.bounded_variation() ? 1.0 / model.mu() : 0.0;
    wp0_ = 0.0;
    for (const auto& t : terms_) wp0_ += t.a * t.r + t.b;
}

double ScaleFunction::w(double x) const {
    if (x < 0.0) return 0.0;
    if (phi_ * x > kAsymptoticSwitch) {
        const auto& L = terms_[lead_];
        double s = L.a + L.b * x;
        for (std::size_t k = 0; k < terms_.size(); ++k)
            if (k != lead_) s += (terms_[k].a + terms_[k].b * x) * std::exp((terms_[k].r - phi_) * x);
        return std::exp(phi_ * x) * s;
    }
    double s = w0_;
    for (const auto& t : terms_) {
        s += t.a * std::expm1(t.r * x);
        if (t.b != 0.0) s += t.b * x * std::exp(t.r * x);
    }
    return s;
}

double ScaleFunction::w_scaled(double x) const {
    if (x < 0.0) return 0.0;
    if (phi_ * x > kAsymptoticSwitch) {
        double s = 0.0;
        for (const auto& t : terms_) s += (t.a + t.b * x) * std::exp((t.r - phi_) * x);
        return s;
    }
    return std::exp(-phi_ * x) * w(x);
}

double ScaleFunction::w_prime(double x) const {
    if (x < 0.0) return 0.0;
    double s = 0.0;
    if (phi_ * x > kAsymptoticSwitch) {
        for (const auto& t : terms_)
            s += (t.a * t.r + t.b + t.b * t.r * x) * std::exp((t.r - phi_) * x);
        return std::exp(phi_ * x) * s;
    }
    for (const auto& t : terms_) s += (t.a * t.r + t.b + t.b * t.r * x) * std::exp(t.r * x);
    return s;
}

double ScaleFunction::z(double x) const {
    if (x <= 0.0 || q_ == 0.0) return 1.0;
    double s = 0.0;
    for (const auto& t : terms_) {
        s += t.a * expm1_over(t.r, x);
        if (t.b != 0.0) s += t.b * moment1(t.r, x);
    }
    return 1.0 + q_ * s;
}

std::vector<ExpTerm> ScaleFunction::derivative_terms() const {
    std::vector<ExpTerm> d;
    d.reserve(terms_.size());
    for (const auto& t : terms_) d.push_back({t.r, t.a * t.r + t.b, t.b * t.r});
    return d;
}

double base_scale_w(const ModelSpec& model, double q, double x) {
    return ScaleFunction(model, q).w(x);
}

double base_scale_w_prime(const ModelSpec& model, double q, double x) {
    return ScaleFunction(model, q).w_prime(x);
}

double base_scale_z(const ModelSpec& model, double q, double x) {
    if (x <= 0.0 || q == 0.0) return 1.0;
    return ScaleFunction(model, q).z(x);
}

}  // namespace snlp
