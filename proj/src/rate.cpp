#include "snlp/rate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snlp/errors.hpp"

namespace snlp {

namespace {

void check_samples(const std::vector<double>& xs, const std::vector<double>& values, const char* who) {
    if (xs.empty() || xs.size() != values.size())
        throw DomainError(std::string(who) + ": xs and values must be non-empty and equally long");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(values[i]))
            throw DomainError(std::string(who) + ": non-finite sample");
        if (i > 0 && !(xs[i] > xs[i - 1]))
            throw DomainError(std::string(who) + ": sample abscissae must be strictly increasing");
    }
}

void check_levels(const std::vector<StepLevel>& levels, const char* who) {
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!std::isfinite(levels[i].b) || !std::isfinite(levels[i].delta))
            throw DomainError(std::string(who) + ": non-finite step");
        if (i > 0 && !(levels[i].b > levels[i - 1].b))
            throw DomainError(std::string(who) + ": step levels must be strictly increasing in b");
    }
}

}  // namespace

double Samples::at(double x) const {
    if (x <= xs.front()) return values.front();
    if (x >= xs.back()) return values.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t j = static_cast<std::size_t>(it - xs.begin());
    double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return (1.0 - t) * values[j - 1] + t * values[j];
}

RateFunction RateFunction::zero() { return RateFunction{}; }

RateFunction RateFunction::steps(std::vector<StepLevel> levels) {
    check_levels(levels, "rate steps");
    for (const auto& l : levels)
        if (!(l.delta > 0.0)) throw DomainError("rate steps: every delta must be > 0");
    RateFunction r;
    if (levels.empty()) return r;
    r.kind_ = Kind::Steps;
    r.d_prime_ = levels.front().b;
    r.levels_ = std::move(levels);
    return r;
}

RateFunction RateFunction::sampled(std::vector<double> xs, std::vector<double> values) {
    check_samples(xs, values, "rate samples");
    if (values.front() != 0.0) throw DomainError("rate samples: the first value must be 0");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[i - 1]) throw DomainError("rate samples: values must be nondecreasing");
    RateFunction r;
    r.kind_ = Kind::Sampled;
    std::size_t k = 0;
    while (k + 1 < values.size() && values[k + 1] == 0.0) ++k;
    r.d_prime_ = xs[k];
    r.samples_ = Samples{std::move(xs), std::move(values)};
    if (r.samples_.values.back() == 0.0) return zero();
    return r;
}

double RateFunction::value(double x) const { return left_limit(x); }

double RateFunction::left_limit(double x) const {
    switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::Steps: {
            double s = 0.0;
            for (const auto& l : levels_)
                if (x > l.b) s += l.delta;
            return s;
        }
        case Kind::Sampled: return samples_.at(x);
    }
    return 0.0;
}

double RateFunction::right_limit(double x) const {
    if (kind_ != Kind::Steps) return left_limit(x);
    double s = 0.0;
    for (const auto& l : levels_)
        if (x >= l.b) s += l.delta;
    return s;
}

double RateFunction::sup() const noexcept {
    switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::Steps: {
            double s = 0.0;
            for (const auto& l : levels_) s += l.delta;
            return s;
        }
        case Kind::Sampled: return samples_.values.back();
    }
    return 0.0;
}

std::vector<double> RateFunction::jumps() const {
    std::vector<double> out;
    for (const auto& l : levels_) out.push_back(l.b);
    return out;
}

bool RateFunction::deltas_increasing() const {
    for (std::size_t i = 1; i < levels_.size(); ++i)
        if (!(levels_[i].delta > levels_[i - 1].delta)) return false;
    return true;
}

NodeSamples RateFunction::sample(const Grid& g) const {
    NodeSamples s;
    s.left.resize(static_cast<std::size_t>(g.size()));
    s.right.resize(s.left.size());
    for (int i = 0; i < g.size(); ++i) {
        s.left[i] = left_limit(g.node(i));
        s.right[i] = right_limit(g.node(i));
    }
    return s;
}

void RateFunction::check_against(const ModelSpec& model) const {
    if (model.bounded_variation() && !(sup() < model.drift())) {
        std::ostringstream os;
        os << "rate: sup phi = " << sup() << " must be < c = " << model.drift()
           << " for a bounded-variation model";
        throw ConstraintError(os.str());
    }
}

std::string RateFunction::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
        case Kind::Zero: os << "zero"; break;
        case Kind::Steps:
            os << "steps";
            for (const auto& l : levels_) os << " (" << l.b << "," << l.delta << ")";
            break;
        case Kind::Sampled: os << "sampled n=" << samples_.xs.size(); break;
    }
    return os.str();
}

OmegaFunction OmegaFunction::constant(double q) {
    if (!(q >= 0.0) || !std::isfinite(q)) throw DomainError("omega: constant must be finite and >= 0");
    OmegaFunction w;
    w.base_ = q;
    return w;
}

OmegaFunction OmegaFunction::steps(double base, std::vector<StepLevel> levels) {
    check_levels(levels, "omega steps");
    OmegaFunction w;
    w.kind_ = levels.empty() ? Kind::Constant : Kind::Steps;
    w.base_ = base;
    double v = base;
    if (!(v >= 0.0)) throw DomainError("omega steps: omega must be nonnegative");
    for (const auto& l : levels) {
        v += l.delta;
        if (!(v >= 0.0)) throw DomainError("omega steps: omega must be nonnegative");
    }
    w.levels_ = std::move(levels);
    return w;
}

OmegaFunction OmegaFunction::sampled(std::vector<double> xs, std::vector<double> values) {
    check_samples(xs, values, "omega samples");
    for (double v : values)
        if (!(v >= 0.0)) throw DomainError("omega samples: omega must be nonnegative");
    OmegaFunction w;
    w.kind_ = Kind::Sampled;
    w.samples_ = Samples{std::move(xs), std::move(values)};
    return w;
}

OmegaFunction OmegaFunction::with_left_tail(double p) const {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("omega: left tail value must be >= 0");
    OmegaFunction w = *this;
    w.left_tail_ = p;
    return w;
}

bool OmegaFunction::is_constant() const noexcept {
    return kind_ == Kind::Constant && (!left_tail_ || *left_tail_ == base_);
}

double OmegaFunction::core(double x, bool right) const {
    switch (kind_) {
        case Kind::Constant: return base_;
        case Kind::Steps: {
            double s = base_;
            for (const auto& l : levels_)
                if (right ? x >= l.b : x > l.b) s += l.delta;
            return s;
        }
        case Kind::Sampled: return samples_.at(x);
    }
    return base_;
}

double OmegaFunction::value(double x) const {
    if (left_tail_ && x <= 0.0) return *left_tail_;
    return core(x, false);
}

double OmegaFunction::left_limit(double x) const {
    if (left_tail_ && x <= 0.0) return *left_tail_;
    return core(x, false);
}

double OmegaFunction::right_limit(double x) const {
    if (left_tail_ && x < 0.0) return *left_tail_;
    return core(x, true);
}

double OmegaFunction::min_value() const noexcept {
    double m = base_;
    if (kind_ == Kind::Sampled) m = *std::min_element(samples_.values.begin(), samples_.values.end());
    double v = base_;
    for (const auto& l : levels_) m = std::min(m, v += l.delta);
    if (left_tail_) m = std::min(m, *left_tail_);
    return m;
}

double OmegaFunction::max_value() const noexcept {
    double m = base_;
    if (kind_ == Kind::Sampled) m = *std::max_element(samples_.values.begin(), samples_.values.end());
    double v = base_;
    for (const auto& l : levels_) m = std::max(m, v += l.delta);
    if (left_tail_) m = std::max(m, *left_tail_);
    return m;
}

std::vector<double> OmegaFunction::jumps() const {
    std::vector<double> out;
    for (const auto& l : levels_) out.push_back(l.b);
    if (left_tail_ && core(0.0, true) != *left_tail_) out.push_back(0.0);
    std::sort(out.begin(), out.end());
    return out;
}

NodeSamples OmegaFunction::sample(const Grid& g) const {
    NodeSamples s;
    s.left.resize(static_cast<std::size_t>(g.size()));
    s.right.resize(s.left.size());
    for (int i = 0; i < g.size(); ++i) {
        s.left[i] = left_limit(g.node(i));
        s.right[i] = right_limit(g.node(i));
    }
    return s;
}

std::string OmegaFunction::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
        case Kind::Constant: os << "constant " << base_; break;
        case Kind::Steps:
            os << "steps base=" << base_;
            for (const auto& l : levels_) os << " (" << l.b << "," << l.delta << ")";
            break;
        case Kind::Sampled: os << "sampled n=" << samples_.xs.size(); break;
    }
    if (left_tail_) os << " p=" << *left_tail_;
    return os.str();
}

double xi(const ModelSpec& model, double /*q*/, const RateFunction& rate, double x) {
    if (!model.bounded_variation()) return 1.0;
    return 1.0 - rate.value(x) / model.drift();
}

NodeSamples xi_samples(const ModelSpec& model, const RateFunction& rate, const Grid& grid) {
    NodeSamples phi = rate.sample(grid);
    if (!model.bounded_variation()) return NodeSamples::constant(grid.size(), 1.0);
    double w0 = 1.0 / model.drift();
    for (auto& v : phi.left) v = 1.0 - w0 * v;
    for (auto& v : phi.right) v = 1.0 - w0 * v;
    return phi;
}

std::vector<double> misaligned_jumps(const Grid& grid, const std::vector<double>& points) {
    std::vector<double> out;
    for (double b : points)
        if (b > grid.d() && b < grid.a() && !grid.node_index(b)) out.push_back(b);
    return out;
}

}  // namespace snlp
