#include "snlp/identities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "snlp/errors.hpp"

namespace snlp {

const char* reflection_name(Reflection r) {
    switch (r) {
        case Reflection::None: return "none";
        case Reflection::AtInfimum: return "infimum";
        case Reflection::AtSupremum: return "supremum";
    }
    return "?";
}

std::string ProcessKind::describe() const {
    std::ostringstream os;
    os << base.describe() << " rate=" << rate.describe() << " omega=" << omega.describe()
       << " reflected=" << reflection_name(reflected);
    return os.str();
}

// W(., shift), Z(., shift) and their right derivatives, from closed forms or tables.
// Off-lattice shifts blend the two neighbouring lattice tables (lo, hi); on the first
// cell [shift, hi->shift) the rates are constant, so lo translated is exact there.
struct FluctuationSolver::Scales {
    double shift = 0.0;
    std::optional<ScaleFunction> sf;
    ScalePair tab;
    std::shared_ptr<const Scales> lo, hi;
    double theta = 0.0;

    double w(double x) const { return lo ? blend(x, &Scales::w, 0.0) : sf ? sf->w(x - shift) : tab.w.value(x); }
    double z(double x) const { return lo ? blend(x, &Scales::z, 1.0) : sf ? sf->z(x - shift) : tab.z.value(x); }
    double w_right(double x) const {
        if (lo) return blend(x, &Scales::w_right, 0.0);
        return sf ? sf->w_prime(x - shift) : tab.w.right_derivative(x);
    }
    double z_right(double x) const {
        if (lo) return blend(x, &Scales::z_right, 0.0);
        return sf ? (x < shift ? 0.0 : sf->q() * sf->w(x - shift)) : tab.z.right_derivative(x);
    }

private:
    double blend(double x, double (Scales::*f)(double) const, double below) const {
        if (x < shift) return below;
        if (x < hi->shift) return (lo.get()->*f)(x - shift + lo->shift);
        return (1.0 - theta) * (lo.get()->*f)(x) + theta * (hi.get()->*f)(x);
    }
};

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const char* family_prefix(const ProcessKind& k) {
    if (k.rate.is_zero()) return k.omega.is_constant() ? "classical" : "omega";
    return k.omega.is_constant() ? "level" : "omega_level";
}

std::string fid(const ProcessKind& k, const char* what) { return std::string(family_prefix(k)) + "." + what; }

void set_id(std::string* out, std::string id) {
    if (out) *out = std::move(id);
}

Grid grid_from(double shift, double right, int per_unit) {
    double h = 1.0 / per_unit;
    int n = static_cast<int>(std::ceil((right - shift) / h - 1e-9));
    n = std::max(4, n + (n % 2));
    return Grid(shift, shift + n * h, n);
}

}  // namespace

FluctuationSolver::FluctuationSolver(ProcessKind kind, SolverOptions opt) : kind_(std::move(kind)), opt_(opt) {
    if (opt_.n_per_unit < 4 || opt_.tail_per_unit < 4) throw DomainError("solver: grid density must be >= 4");
    if (!(opt_.tail_length > 0.0)) throw DomainError("solver: tail length must be positive");
    if (opt_.resolvent_rows < 4) throw DomainError("solver: resolvent rows must be >= 4");
    kind_.rate.check_against(kind_.base);
    if (kind_.omega.is_constant()) q_ = kind_.omega.constant_value();
    if (kind_.reflected == Reflection::AtSupremum && !kind_.rate.is_zero())
        throw UnsupportedError("supremum reflection is only available with a zero rate function");
}

std::shared_ptr<const FluctuationSolver::Scales> FluctuationSolver::scales(double shift, bool tail) const {
    if (!kind_.classical()) {
        const double h = 1.0 / (tail ? opt_.tail_per_unit : opt_.n_per_unit);
        const double k = std::floor(shift / h + 1e-9);
        if (shift - k * h > 1e-9 * h) {
            auto lo = lattice_scales(k * h, tail);
            auto hi = lattice_scales((k + 1.0) * h, tail);
            auto s = std::make_shared<Scales>();
            s->shift = shift;
            s->lo = lo;
            s->hi = hi;
            s->theta = (shift - k * h) / h;
            return s;
        }
        return lattice_scales(k * h, tail);
    }
    return lattice_scales(shift, tail);
}

std::shared_ptr<const FluctuationSolver::Scales> FluctuationSolver::lattice_scales(double shift, bool tail) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(shift, tail);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto s = std::make_shared<Scales>();
    s->shift = shift;
    if (kind_.classical()) {
        s->sf.emplace(kind_.base, q_);
    } else {
        Grid g = tail ? grid_from(shift, opt_.upper + opt_.tail_length, opt_.tail_per_unit)
                      : grid_from(shift, opt_.upper, opt_.n_per_unit);
        if (kind_.omega.is_constant())
            s->tab = level_scale(kind_.base, q_, kind_.rate, g);
        else
            s->tab = omega_level_scale(kind_.base, kind_.omega, kind_.rate, g, 0.0, opt_.extrapolate);
    }
    cache_[key] = s;
    return s;
}

std::shared_ptr<const ScaleTable> FluctuationSolver::h_cached() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (h_) return h_;
    if (kind_.omega.is_constant()) {
        double h = 1.0 / opt_.n_per_unit;
        double start = std::min(0.0, kind_.rate.is_zero() ? 0.0 : kind_.rate.d_prime());
        start = std::floor(start / h + 1e-9) * h;
        h_ = std::make_shared<ScaleTable>(
            u_function(kind_.base, q_, kind_.rate, grid_from(start, opt_.upper, opt_.n_per_unit)));
    } else {
        h_ = std::make_shared<ScaleTable>(omega_h(kind_.base, kind_.omega, kind_.rate,
                                                  grid_from(0.0, opt_.upper, opt_.n_per_unit), opt_.extrapolate));
    }
    return h_;
}

double FluctuationSolver::inv_xi(double y, bool right) const {
    if (!kind_.base.bounded_variation() || kind_.rate.is_zero()) return 1.0;
    double phi = right ? kind_.rate.right_limit(y) : kind_.rate.value(y);
    return 1.0 / (1.0 - phi / kind_.base.drift());
}

void FluctuationSolver::check_upper(double a, const char* who) const {
    if (a > opt_.upper + 1e-12) {
        std::ostringstream os;
        os << who << ": level " << a << " is beyond the table end " << opt_.upper << "; extend grid";
        throw DomainError(os.str());
    }
}

double FluctuationSolver::tail_constant(const char* name, double lower) const {
    auto s = scales(lower, true);
    if (s->lo)
        return (1.0 - s->theta) * tail_constant(name, s->lo->shift) + s->theta * tail_constant(name, s->hi->shift);
    return require_converged(tail_ratio(name, s->tab.z, s->tab.w));
}

// lim W(A; y) / W(A; lower); off-lattice shifts enter through their blend weights.
double FluctuationSolver::shifted_ratio(double y, double lower) const {
    auto sy = scales(y, true);
    auto sl = scales(lower, true);
    auto parts = [](const std::shared_ptr<const Scales>& s) {
        std::vector<std::pair<double, const Scales*>> out;
        if (s->lo) {
            out.emplace_back(1.0 - s->theta, s->lo.get());
            out.emplace_back(s->theta, s->hi.get());
        } else {
            out.emplace_back(1.0, s.get());
        }
        return out;
    };
    auto py = parts(sy), pl = parts(sl);
    const ScaleTable& ref = pl.front().second->tab.w;
    double num = 0.0, den = 0.0;
    for (const auto& [wt, t] : py) num += wt * require_converged(tail_ratio("c_q", t->tab.w, ref));
    for (const auto& [wt, t] : pl) den += wt * require_converged(tail_ratio("c_q", t->tab.w, ref));
    return num / den;
}

ExitResult FluctuationSolver::exit_two_sided(double x, double lower, double a) const {
    if (kind_.reflected != Reflection::None) throw PreconditionError("exit_two_sided: process must not be reflected");
    if (!(lower <= x && x <= a)) throw DomainError("exit_two_sided: need lower <= x <= a");
    check_upper(a, "exit_two_sided");
    ExitResult r;
    r.formula_id = fid(kind_, "two_sided");
    if (x == a) {
        r.up = 1.0;
        return r;
    }
    auto s = scales(lower, false);
    r.up = s->w(x) / s->w(a);
    r.down = s->z(x) - r.up * s->z(a);
    return r;
}

double FluctuationSolver::exit_one_sided_down(double x, double lower, std::string* formula_id) const {
    if (kind_.reflected != Reflection::None) throw PreconditionError("exit_one_sided: process must not be reflected");
    set_id(formula_id, fid(kind_, "one_sided_down"));
    if (x < lower) return 1.0;
    if (kind_.classical()) {
        ScaleFunction sf(kind_.base, q_);
        double coef = q_ > 0.0 ? q_ / sf.phi() : std::max(psi_prime(kind_.base, 0.0), 0.0);
        return sf.z(x - lower) - coef * sf.w(x - lower);
    }
    double c = tail_constant("a_zw", lower);
    auto s = scales(lower, x > opt_.upper);
    return s->z(x) - c * s->w(x);
}

double FluctuationSolver::exit_one_sided_up(double x, double a, std::string* formula_id) const {
    if (kind_.reflected != Reflection::None) throw PreconditionError("exit_one_sided: process must not be reflected");
    if (!(x <= a)) throw DomainError("exit_one_sided_up: need x <= a");
    check_upper(a, "exit_one_sided_up");
    set_id(formula_id, fid(kind_, "one_sided_up"));
    if (kind_.classical()) return std::exp(-phi_inverse(kind_.base, q_).value * (a - x));
    auto h = h_cached();
    return h->value(x) / h->value(a);
}

ResolventDensity FluctuationSolver::resolvent_density(double x, double y, double lower, double a) const {
    if (kind_.reflected != Reflection::None) throw PreconditionError("resolvent_density: process must not be reflected");
    if (!(lower <= x && x <= a)) throw DomainError("resolvent_density: need lower <= x <= a");
    ResolventDensity r{x, y, a, 0.0, 0.0, fid(kind_, a == kInf ? "resolvent_half_line" : "resolvent_two_sided")};
    if (!(y > lower && y < a)) return r;
    if (a == kInf) {
        double c = kind_.classical()
                       ? std::exp(-phi_inverse(kind_.base, q_).value * (y - lower))
                       : shifted_ratio(y, lower);
        bool tail = x > opt_.upper;
        auto sl = scales(lower, tail);
        auto sy = scales(y, tail);
        r.density = inv_xi(y, false) * (c * sl->w(x) - sy->w(x));
        return r;
    }
    check_upper(a, "resolvent_density");
    auto sl = scales(lower, false);
    auto sy = scales(y, false);
    r.density = inv_xi(y, false) * (sl->w(x) / sl->w(a) * sy->w(a) - sy->w(x));
    return r;
}

ResolventDensity FluctuationSolver::resolvent_density_upward(double x, double y, double a) const {
    if (kind_.reflected != Reflection::None) throw PreconditionError("resolvent_density: process must not be reflected");
    if (!(x <= a)) throw DomainError("resolvent_density_upward: need x <= a");
    check_upper(a, "resolvent_density_upward");
    ResolventDensity r{x, y, a, 0.0, 0.0, fid(kind_, "resolvent_upward")};
    if (!(y < a)) return r;
    double ratio = exit_one_sided_up(x, a);
    auto sy = scales(y, false);
    r.density = inv_xi(y, false) * (ratio * sy->w(a) - sy->w(x));
    return r;
}

double FluctuationSolver::reflected_exit(double x, double a, std::string* formula_id) const {
    if (kind_.reflected == Reflection::None) throw PreconditionError("reflected_exit: process is not reflected");
    if (!(0.0 <= x && x <= a)) throw DomainError("reflected_exit: need 0 <= x <= a");
    check_upper(a, "reflected_exit");
    auto s = scales(0.0, false);
    if (kind_.reflected == Reflection::AtInfimum) {
        set_id(formula_id, fid(kind_, "reflected_infimum_exit"));
        return s->z(x) / s->z(a);
    }
    set_id(formula_id, fid(kind_, "reflected_supremum_exit"));
    return s->z(a - x) - s->z_right(a) / s->w_right(a) * s->w(a - x);
}

ResolventDensity FluctuationSolver::reflected_resolvent_density(double x, double y, double a) const {
    if (kind_.reflected == Reflection::None)
        throw PreconditionError("reflected_resolvent_density: process is not reflected");
    if (!(0.0 <= x && x <= a)) throw DomainError("reflected_resolvent_density: need 0 <= x <= a");
    check_upper(a, "reflected_resolvent_density");
    ResolventDensity r{x, y, a, 0.0, 0.0, ""};
    auto s0 = scales(0.0, false);
    if (kind_.reflected == Reflection::AtInfimum) {
        r.formula_id = fid(kind_, "reflected_infimum_resolvent");
        if (!(y >= 0.0 && y < a)) return r;
        auto sy = scales(y, false);
        r.density = inv_xi(y, false) * (s0->z(x) / s0->z(a) * sy->w(a) - sy->w(x));
        return r;
    }
    r.formula_id = fid(kind_, "reflected_supremum_resolvent");
    double lead = s0->w(a - x) / s0->w_right(a);
    r.atom = lead * s0->w(0.0);
    if (!(y >= 0.0 && y < a)) return r;
    auto ss = scales(a - y, false);
    r.density = lead * ss->w_right(a) - ss->w(a - x);
    return r;
}

double FluctuationSolver::consistency_qresolvent(double x, double a) const {
    if (kind_.reflected == Reflection::None) throw PreconditionError("consistency_qresolvent: process is not reflected");
    if (!kind_.omega.is_constant()) throw PreconditionError("consistency_qresolvent: omega must be constant");
    if (!(0.0 <= x && x <= a)) throw DomainError("consistency_qresolvent: need 0 <= x <= a");
    if (x == a || q_ == 0.0) return 1.0;
    const bool sup = kind_.reflected == Reflection::AtSupremum;

    auto s0 = scales(0.0, false);
    double ratio = sup ? s0->w(a - x) / s0->w_right(a) : s0->z(x) / s0->z(a);
    double atom = sup ? ratio * s0->w(0.0) : 0.0;
    // Row tables end at a; nothing beyond it is read.
    auto row = [&](double shift) {
        Scales s;
        s.shift = shift;
        if (kind_.classical())
            s.sf.emplace(kind_.base, q_);
        else
            s.tab = level_scale(kind_.base, q_, kind_.rate, grid_from(shift, a, opt_.n_per_unit));
        return s;
    };
    // One-sided limit in y of the density; the panels below cut at every jump.
    auto density = [&](double y, bool from_right) {
        if (sup) {
            Scales s = row(a - y);
            double second = (std::abs(y - x) < 1e-12 && !from_right) ? 0.0 : s.w(a - x);
            return ratio * s.w_right(a) - second;
        }
        Scales s = row(y);
        double second = (std::abs(y - x) < 1e-12 && from_right) ? 0.0 : s.w(x);
        return inv_xi(y, from_right) * (ratio * s.w(a) - second);
    };
    std::vector<double> cuts{0.0, a};
    if (x > 0.0) cuts.push_back(x);
    for (double b : kind_.rate.jumps())
        if (b > 0.0 && b < a) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double u, double v) { return v - u < 1e-12; }), cuts.end());

    double mass = 0.0;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        double lo = cuts[p], hi = cuts[p + 1];
        int m = static_cast<int>(std::lround(opt_.resolvent_rows * (hi - lo) / a));
        m = std::max(4, m + (m % 2));
        double step = (hi - lo) / m;
        std::vector<double> f(static_cast<std::size_t>(m + 1));
        for (int j = 0; j <= m; ++j) f[j] = density(j == m ? hi : lo + j * step, j == 0);
        auto trap = [&](int stride) {
            double t = 0.5 * (f.front() + f.back());
            for (int j = stride; j < m; j += stride) t += f[j];
            return t * step * stride;
        };
        double t1 = trap(1);
        mass += (4.0 * t1 - trap(2)) / 3.0;
    }
    return 1.0 - q_ * (mass + atom);
}

std::pair<double, double> FluctuationSolver::multiplicativity(double x, double y, double z, bool reflected) const {
    if (!(0.0 <= x && x <= y && y <= z)) throw DomainError("multiplicativity: need 0 <= x <= y <= z");
    check_upper(z, "multiplicativity");
    auto s = scales(0.0, false);
    auto f = [&](double u, double v) {
        if (u == v) return 1.0;
        return reflected ? s->z(u) / s->z(v) : s->w(u) / s->w(v);
    };
    return {f(x, z), f(x, y) * f(y, z)};
}

ScalePair FluctuationSolver::tables(double shift) const {
    if (kind_.classical())
        return level_scale(kind_.base, q_, RateFunction::zero(), grid_from(shift, opt_.upper, opt_.n_per_unit));
    auto s = scales(shift, false);
    if (!s->lo) return s->tab;
    Grid g = grid_from(shift, opt_.upper, opt_.n_per_unit);
    if (kind_.omega.is_constant()) return level_scale(kind_.base, q_, kind_.rate, g);
    return omega_level_scale(kind_.base, kind_.omega, kind_.rate, g, 0.0, opt_.extrapolate);
}

ScaleTable FluctuationSolver::h_table() const { return *h_cached(); }

}  // namespace snlp
