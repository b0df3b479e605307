#include "snlp/scale_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "snlp/errors.hpp"
#include "snlp/simd/kernels.hpp"

namespace snlp {

namespace {

constexpr std::array<const char*, 13> kFamilyNames = {
    "LevelW", "LevelZ", "LevelWPrime", "LevelZPrime", "MultiW_k", "MultiZ_k", "UFunc",
    "OmegaW", "OmegaZ", "OmegaH", "OmegaLevelW", "OmegaLevelZ", "OmegaLevelH"};

std::vector<double> lags(const std::function<double(double)>& f, int n, double h) {
    std::vector<double> k(static_cast<std::size_t>(n + 1));
    for (int m = 0; m <= n; ++m) k[m] = f(m * h);
    return k;
}

// Sums sum_{j=s}^{i-1} k_{i-j} G_j as contiguous dot products.
class LagDot {
public:
    explicit LagDot(const std::vector<double>& k) : n_(static_cast<int>(k.size()) - 1), rev_(k.rbegin(), k.rend()) {}
    double sum(int i, int s, const std::vector<double>& G) const {
        if (i <= s) return 0.0;
        return simd::dot(rev_.data() + (n_ - i) + s, G.data() + s, static_cast<std::size_t>(i - s));
    }
    const double* reversed() const { return rev_.data(); }

private:
    int n_;
    std::vector<double> rev_;
};

// Trapezoid weights from one-sided integrand values, starting at node s.
std::vector<double> weights(const std::vector<double>& fr, const std::vector<double>& fl, int s) {
    std::vector<double> G(fr.size(), 0.0);
    G[s] = 0.5 * fr[s];
    for (std::size_t j = static_cast<std::size_t>(s) + 1; j < fr.size(); ++j) G[j] = 0.5 * (fr[j] + fl[j]);
    return G;
}

NodeSamples reciprocal(const NodeSamples& s) {
    NodeSamples r = s;
    for (auto& v : r.left) v = 1.0 / v;
    for (auto& v : r.right) v = 1.0 / v;
    return r;
}

std::string describe(const ModelSpec& m, double q, const RateFunction& rate) {
    std::ostringstream os;
    os.precision(17);
    os << m.describe() << " q=" << q << " rate=" << rate.describe();
    return os.str();
}

SolutionTable derivative_table(const Grid& g, std::vector<double> right, std::vector<double> left) {
    SolutionTable t{g, std::move(right), std::move(left), SolveMethod::Quadrature, 0};
    if (t.left_limits == t.values) t.left_limits.clear();
    return t;
}

// value_i = base_i + int_{x_s}^{x_i} k(x_i - z) phi(z) D(z) dz, the original (non-derivative) equation.
std::vector<double> reconstruct(const Grid& g, const std::vector<double>& klag, const std::vector<double>& base,
                                const NodeSamples& phi, const SolutionTable& der, int s = 0) {
    const std::size_t N = static_cast<std::size_t>(g.size());
    std::vector<double> fr(N), fl(N);
    for (std::size_t j = 0; j < N; ++j) {
        fr[j] = phi.right[j] * der.right(static_cast<int>(j));
        fl[j] = phi.left[j] * der.left(static_cast<int>(j));
    }
    std::vector<double> G = weights(fr, fl, s);
    LagDot conv(klag);
    const double h = g.h();
    std::vector<double> v = base;
    for (int i = s + 1; i < g.size(); ++i) v[i] += h * conv.sum(i, s, G) + 0.5 * h * klag[0] * fl[i];
    return v;
}

ScaleTable make_table(Family f, double shift, double q, const Grid& g, std::vector<double> values,
                      SolutionTable der, SolveMethod method, std::string params, LeftExtension ext,
                      double rate = 0.0) {
    ScaleTable t;
    t.family = f;
    t.shift = shift;
    t.q_shift = q;
    t.table = SolutionTable{g, std::move(values), {}, method, 0};
    t.derivative = std::move(der);
    t.params = std::move(params);
    t.extension = ext;
    t.extension_rate = rate;
    return t;
}

struct Forcing {
    std::vector<double> value;  // continuous
    NodeSamples deriv;
};

struct OmegaSolution {
    std::vector<double> value;
    std::vector<double> d_right;
    std::vector<double> d_left;
};

// F(x) = g(x) + int_{x_0}^x K(x; z) rho(z) F(z) dz with K the level-dependent W^(q)(x; z)
// (the classical W^(q)(x - z) when phi = 0), for several forcings sharing one kernel.
std::vector<OmegaSolution> solve_omega(const ScaleFunction& sf, const Grid& g, const RateFunction& rate,
                                       const NodeSamples& xis, const NodeSamples& rho,
                                       const std::vector<const Forcing*>& forcings) {
    const int n = g.n();
    const std::size_t N = static_cast<std::size_t>(n + 1);
    const double h = g.h(), hh = 0.5 * h;
    const double w0 = sf.w0();
    const std::size_t nf = forcings.size();
    std::vector<OmegaSolution> out(nf);
    std::vector<std::vector<double>> G(nf, std::vector<double>(N, 0.0));
    for (std::size_t f = 0; f < nf; ++f) {
        out[f].value.assign(N, 0.0);
        out[f].d_right.assign(N, 0.0);
        out[f].d_left.assign(N, 0.0);
        const Forcing& fc = *forcings[f];
        double F0 = fc.value[0];
        out[f].value[0] = F0;
        out[f].d_right[0] = fc.deriv.right[0] + w0 * rho.right[0] * F0;
        out[f].d_left[0] = fc.deriv.left[0];
        G[f][0] = 0.5 * rho.right[0] * F0;
    }
    auto finish_row = [&](int i, const std::vector<double>& dots, const std::vector<double>& dr,
                          const std::vector<double>& dl, double diag_r, double diag_l) {
        double den = 1.0 - hh * w0 * rho.left[i];
        if (!(den > 0.0)) {
            std::ostringstream os;
            os << "omega solve: singular diagonal at x=" << g.node(i) << "; refine the grid";
            throw StepSizeError(os.str());
        }
        for (std::size_t f = 0; f < nf; ++f) {
            const Forcing& fc = *forcings[f];
            double F = (fc.value[i] + h * dots[f]) / den;
            out[f].value[i] = F;
            out[f].d_right[i] = fc.deriv.right[i] + w0 * rho.right[i] * F + h * dr[f] + hh * diag_r * rho.left[i] * F;
            out[f].d_left[i] = fc.deriv.left[i] + w0 * rho.left[i] * F + h * dl[f] + hh * diag_l * rho.left[i] * F;
        }
    };
    std::vector<double> dots(nf), dr(nf), dl(nf);

    if (rate.is_zero()) {
        std::vector<double> Wl = lags([&](double x) { return sf.w(x); }, n, h);
        std::vector<double> Wpl = lags([&](double x) { return sf.w_prime(x); }, n, h);
        LagDot cw(Wl), cwp(Wpl);
        for (int i = 1; i <= n; ++i) {
            for (std::size_t f = 0; f < nf; ++f) {
                dots[f] = cw.sum(i, 0, G[f]);
                dr[f] = dl[f] = cwp.sum(i, 0, G[f]);
            }
            finish_row(i, dots, dr, dl, Wpl[0], Wpl[0]);
            for (std::size_t f = 0; f < nf; ++f)
                G[f][i] = 0.5 * (rho.right[i] + rho.left[i]) * out[f].value[i];
        }
        return out;
    }

    // Column sweep over the level-dependent kernel.
    std::vector<ExpTerm> dt = sf.derivative_terms();
    if (dt.size() > simd::kMaxTerms) throw UnsupportedError("omega solve: too many exponential terms");
    const std::size_t K = dt.size();
    NodeSamples phi = rate.sample(g);
    std::vector<double> Wpl = lags([&](double x) { return sf.w_prime(x); }, n, h);
    LagDot cwp(Wpl);
    const double k0 = sf.w_prime0();
    std::vector<std::vector<double>> S(K, std::vector<double>(N, 0.0)), T(K, std::vector<double>(N, 0.0));
    std::vector<double> uR(N, 0.0), uL(N, 0.0), val(N, 0.0);
    simd::SweepState st;
    st.terms = K;
    for (std::size_t k = 0; k < K; ++k) {
        st.s[k] = S[k].data();
        st.t[k] = T[k].data();
    }
    st.u_right = uR.data();
    st.u_left = uL.data();
    st.value = val.data();
    simd::SweepRow row;
    for (std::size_t k = 0; k < K; ++k) {
        row.e[k] = std::exp(dt[k].r * h);
        row.c[k] = dt[k].a;
        row.d[k] = dt[k].b;
    }
    row.h = h;
    row.k0 = k0;
    uR[0] = k0 / xis.right[0];
    uL[0] = k0 / xis.left[0];
    val[0] = w0;
    for (int i = 1; i <= n; ++i) {
        row.phi_prev_right = phi.right[i - 1];
        row.phi_left = phi.left[i];
        double den = xis.left[i] - hh * k0 * phi.left[i];
        if (!(den > 0.0)) throw StepSizeError("kernel sweep: singular diagonal; refine the grid");
        row.inv_den = 1.0 / den;
        row.inv_xi_right = 1.0 / xis.right[i];
        row.forcing = cwp.reversed() + (n - i);
        row.ncols = static_cast<std::size_t>(i);
        simd::sweep_advance(st, row);
        uR[i] = k0 / xis.right[i];
        uL[i] = k0 / xis.left[i];
        val[i] = w0;
        for (std::size_t f = 0; f < nf; ++f) {
            dots[f] = simd::dot(val.data(), G[f].data(), static_cast<std::size_t>(i));
            dr[f] = simd::dot(uR.data(), G[f].data(), static_cast<std::size_t>(i));
            dl[f] = simd::dot(uL.data(), G[f].data(), static_cast<std::size_t>(i));
        }
        finish_row(i, dots, dr, dl, uR[i], uL[i]);
        for (std::size_t f = 0; f < nf; ++f)
            G[f][i] = 0.5 * (rho.right[i] + rho.left[i]) * out[f].value[i];
    }
    return out;
}

NodeSamples rho_samples(const OmegaFunction& omega, const NodeSamples& xis, const Grid& g, double q) {
    NodeSamples r = omega.sample(g);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r.left[i] = (r.left[i] - q) / xis.left[i];
        r.right[i] = (r.right[i] - q) / xis.right[i];
    }
    return r;
}

Forcing forcing_from(const ScaleTable& t, int offset = 0) {
    Forcing f;
    const int N = t.grid().size() - offset;
    f.value.assign(t.table.values.begin() + offset, t.table.values.begin() + offset + N);
    f.deriv.right.resize(static_cast<std::size_t>(N));
    f.deriv.left.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        f.deriv.right[i] = t.derivative.right(i + offset);
        f.deriv.left[i] = t.derivative.left(i + offset);
    }
    return f;
}

int node_or_throw(const Grid& g, double x, const char* who) {
    auto idx = g.node_index(x);
    if (!idx) {
        std::ostringstream os;
        os << who << ": level " << x << " must lie on a grid node (h=" << g.h() << ")";
        throw PreconditionError(os.str());
    }
    return *idx;
}

}  // namespace

const char* family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

std::optional<Family> parse_family(const std::string& name) {
    for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
        if (name == kFamilyNames[i]) return static_cast<Family>(i);
    return std::nullopt;
}

double ScaleTable::value(double x) const {
    if (x < grid().d()) {
        switch (extension) {
            case LeftExtension::Zero: return 0.0;
            case LeftExtension::One: return 1.0;
            case LeftExtension::Exponential: return std::exp(extension_rate * x);
        }
    }
    return table.value_at(x);
}

double ScaleTable::right_derivative(double x) const {
    if (x < grid().d())
        return extension == LeftExtension::Exponential ? extension_rate * std::exp(extension_rate * x) : 0.0;
    return derivative.value_at(x);
}

double ScaleTable::left_derivative(double x) const {
    if (x <= grid().d())
        return extension == LeftExtension::Exponential ? extension_rate * std::exp(extension_rate * x) : 0.0;
    return derivative.left_value_at(x);
}

namespace {

ScalePair level_scale_core(const ModelSpec& model, double q, const RateFunction& rate, const Grid& g) {
    rate.check_against(model);
    ScaleFunction sf(model, q);
    const int n = g.n();
    const double h = g.h();
    std::vector<double> Wl = lags([&](double x) { return sf.w(x); }, n, h);
    std::vector<double> Wpl = lags([&](double x) { return sf.w_prime(x); }, n, h);
    NodeSamples phi = rate.sample(g);
    NodeSamples A = reciprocal(xi_samples(model, rate, g));

    NodeSamples gw = NodeSamples::continuous(Wpl);
    gw.left[0] = 0.0;
    SolutionTable dW = solve_convolution({g, Wpl, A, phi, gw});
    std::vector<double> zq(Wl.size());
    for (std::size_t i = 0; i < Wl.size(); ++i) zq[i] = q * Wl[i];
    NodeSamples gz = NodeSamples::continuous(zq);
    gz.left[0] = 0.0;
    SolutionTable dZ = solve_convolution({g, Wpl, A, phi, gz});

    std::vector<double> zbase = lags([&](double x) { return sf.z(x); }, n, h);
    std::vector<double> wv = reconstruct(g, Wl, Wl, phi, dW);
    std::vector<double> zv = reconstruct(g, Wl, zbase, phi, dZ);
    std::string params = describe(model, q, rate);
    ScalePair out;
    out.w = make_table(Family::LevelW, g.d(), q, g, std::move(wv),
                       derivative_table(g, dW.values, dW.left_limits.empty() ? dW.values : dW.left_limits),
                       SolveMethod::Convolution, params, LeftExtension::Zero);
    out.z = make_table(Family::LevelZ, g.d(), q, g, std::move(zv),
                       derivative_table(g, dZ.values, dZ.left_limits.empty() ? dZ.values : dZ.left_limits),
                       SolveMethod::Convolution, params, LeftExtension::One);
    return out;
}

ScalePair multi_refracted_core(const ModelSpec& model, double q, const RateFunction& steps, const Grid& g) {
    if (!(steps.kind() == RateFunction::Kind::Steps || steps.is_zero()))
        throw PreconditionError("multi_refracted_scale: rate must be a step function");
    steps.check_against(model);
    ScaleFunction sf(model, q);
    const int n = g.n();
    const std::size_t N = static_cast<std::size_t>(n + 1);
    const double h = g.h(), hh = 0.5 * h;

    std::vector<double> Wv = lags([&](double x) { return sf.w(x); }, n, h);
    std::vector<double> Zv = lags([&](double x) { return sf.z(x); }, n, h);
    std::vector<double> dWr = lags([&](double x) { return sf.w_prime(x); }, n, h);
    std::vector<double> dWl = dWr;
    dWl[0] = 0.0;
    std::vector<double> dZr(N), dZl(N);
    for (std::size_t i = 0; i < N; ++i) dZr[i] = dZl[i] = q * Wv[i];
    dZl[0] = 0.0;

    double cumulative = 0.0;
    for (const auto& lvl : steps.levels()) {
        cumulative += lvl.delta;
        ModelSpec mk = drift_changed(model, cumulative);
        ScaleFunction sk(mk, q);
        int s = lvl.b <= g.d() ? 0 : node_or_throw(g, lvl.b, "multi_refracted_scale");
        if (lvl.b >= g.a()) continue;
        std::vector<double> Kl = lags([&](double x) { return sk.w(x); }, n, h);
        std::vector<double> Kpl = lags([&](double x) { return sk.w_prime(x); }, n, h);
        LagDot ck(Kl), ckp(Kpl);
        auto step = [&](std::vector<double>& v, std::vector<double>& dr, std::vector<double>& dl) {
            std::vector<double> G = weights(dr, dl, s);
            std::vector<double> nv = v, ndr = dr, ndl = dl;
            ndr[s] += lvl.delta * sk.w0() * dr[s];
            for (int i = s + 1; i <= n; ++i) {
                double c = h * ck.sum(i, s, G) + hh * Kl[0] * dl[i];
                double cp = h * ckp.sum(i, s, G) + hh * Kpl[0] * dl[i];
                nv[i] += lvl.delta * c;
                ndr[i] += lvl.delta * (sk.w0() * dr[i] + cp);
                ndl[i] += lvl.delta * (sk.w0() * dl[i] + cp);
            }
            v.swap(nv);
            dr.swap(ndr);
            dl.swap(ndl);
        };
        step(Wv, dWr, dWl);
        step(Zv, dZr, dZl);
    }
    std::string params = describe(model, q, steps);
    ScalePair out;
    out.w = make_table(Family::MultiW_k, g.d(), q, g, std::move(Wv), derivative_table(g, dWr, dWl),
                       SolveMethod::Quadrature, params, LeftExtension::Zero);
    out.z = make_table(Family::MultiZ_k, g.d(), q, g, std::move(Zv), derivative_table(g, dZr, dZl),
                       SolveMethod::Quadrature, params, LeftExtension::One);
    return out;
}

bool coarse_aligned(const Grid& g, const RateFunction& rate, const OmegaFunction& omega);

}  // namespace

ScalePair level_scale(const ModelSpec& model, double q, const RateFunction& rate, const Grid& g, bool extrapolate) {
    ScalePair fine = level_scale_core(model, q, rate, g);
    if (!extrapolate || rate.is_zero() || !coarse_aligned(g, rate, OmegaFunction::constant(0.0))) return fine;
    ScalePair coarse = level_scale_core(model, q, rate, Grid(g.d(), g.a(), g.n() / 2));
    return ScalePair{richardson(fine.w, coarse.w), richardson(fine.z, coarse.z)};
}

ScalePair multi_refracted_scale(const ModelSpec& model, double q, const RateFunction& steps, const Grid& g,
                                bool extrapolate) {
    ScalePair fine = multi_refracted_core(model, q, steps, g);
    if (!extrapolate || steps.is_zero() || !coarse_aligned(g, steps, OmegaFunction::constant(0.0))) return fine;
    ScalePair coarse = multi_refracted_core(model, q, steps, Grid(g.d(), g.a(), g.n() / 2));
    return ScalePair{richardson(fine.w, coarse.w), richardson(fine.z, coarse.z)};
}

double lemma14_closed_form(const ModelSpec& model, double q, const RateFunction& steps, double x, double y) {
    double top = steps.levels().empty() ? -INFINITY : steps.levels().back().b;
    if (!(y > top)) throw PreconditionError("lemma14_closed_form: requires y above the top refraction level");
    if (x < y) return 0.0;
    ModelSpec mk = steps.levels().empty() ? model : drift_changed(model, steps.sup());
    return xi(model, q, steps, y) * ScaleFunction(mk, q).w(x - y);
}

ScaleTable u_function(const ModelSpec& model, double q, const RateFunction& rate, const Grid& g) {
    rate.check_against(model);
    if (!rate.is_zero() && g.d() > rate.d_prime() + 1e-12)
        throw PreconditionError("u_function: grid must start at or below d'");
    ScaleFunction sf(model, q);
    const double phiq = sf.phi();
    const int n = g.n();
    const double h = g.h();
    std::vector<double> Wl = lags([&](double x) { return sf.w(x); }, n, h);
    std::vector<double> Wpl = lags([&](double x) { return sf.w_prime(x); }, n, h);
    std::vector<double> e(static_cast<std::size_t>(n + 1)), de(e.size());
    for (int i = 0; i <= n; ++i) {
        e[i] = std::exp(phiq * g.node(i));
        de[i] = phiq * e[i];
    }
    NodeSamples phi = rate.sample(g);
    NodeSamples A = reciprocal(xi_samples(model, rate, g));
    SolutionTable du = solve_convolution({g, Wpl, A, phi, NodeSamples::continuous(de)});
    std::vector<double> uv = reconstruct(g, Wl, e, phi, du);
    return make_table(Family::UFunc, g.d(), q, g, std::move(uv),
                      derivative_table(g, du.values, du.left_limits.empty() ? du.values : du.left_limits),
                      SolveMethod::Convolution, describe(model, q, rate), LeftExtension::Exponential, phiq);
}

namespace {

bool coarse_aligned(const Grid& g, const RateFunction& rate, const OmegaFunction& omega) {
    if (g.n() % 2 != 0 || g.n() < 4) return false;
    Grid coarse(g.d(), g.a(), g.n() / 2);
    std::vector<double> pts = rate.jumps();
    for (double b : omega.jumps()) pts.push_back(b);
    return misaligned_jumps(coarse, pts).empty();
}

ScalePair omega_level_core(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                           const Grid& g, double split_q);
ScaleTable omega_h_core(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                        const Grid& g);

}  // namespace

ScaleTable richardson(const ScaleTable& fine, const ScaleTable& coarse) {
    const Grid& gf = fine.grid();
    const Grid& gc = coarse.grid();
    if (gf.n() != 2 * gc.n() || std::abs(gf.d() - gc.d()) > 1e-12 || std::abs(gf.a() - gc.a()) > 1e-12)
        throw PreconditionError("richardson: fine grid must halve the coarse grid");
    auto combine = [&](const std::vector<double>& f, const std::vector<double>& c) {
        std::vector<double> out = f;
        std::vector<double> corr(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) corr[i] = (f[2 * i] - c[i]) / 3.0;
        for (std::size_t i = 0; i < c.size(); ++i) out[2 * i] += corr[i];
        for (std::size_t i = 0; i + 1 < c.size(); ++i) out[2 * i + 1] += 0.5 * (corr[i] + corr[i + 1]);
        return out;
    };
    auto sides = [](const SolutionTable& t) {
        return t.left_limits.empty() ? t.values : t.left_limits;
    };
    ScaleTable out = fine;
    out.table.values = combine(fine.table.values, coarse.table.values);
    std::vector<double> dr = combine(fine.derivative.values, coarse.derivative.values);
    std::vector<double> dl = combine(sides(fine.derivative), sides(coarse.derivative));
    out.derivative = derivative_table(gf, std::move(dr), std::move(dl));
    return out;
}

ScalePair omega_level_scale(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                            const Grid& g, double split_q, bool extrapolate) {
    ScalePair fine = omega_level_core(model, omega, rate, g, split_q);
    if (!extrapolate || !coarse_aligned(g, rate, omega)) return fine;
    ScalePair coarse = omega_level_core(model, omega, rate, Grid(g.d(), g.a(), g.n() / 2), split_q);
    return ScalePair{richardson(fine.w, coarse.w), richardson(fine.z, coarse.z)};
}

ScaleTable omega_h(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate, const Grid& g,
                   bool extrapolate) {
    ScaleTable fine = omega_h_core(model, omega, rate, g);
    if (!extrapolate || !coarse_aligned(g, rate, omega)) return fine;
    ScaleTable coarse = omega_h_core(model, omega, rate, Grid(g.d(), g.a(), g.n() / 2));
    if (fine.grid().n() != 2 * coarse.grid().n()) return fine;
    return richardson(fine, coarse);
}

namespace {

ScalePair omega_level_core(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                           const Grid& g, double split_q) {
    rate.check_against(model);
    ScaleFunction sf(model, split_q);
    const int n = g.n();
    const double h = g.h();
    NodeSamples xis = xi_samples(model, rate, g);
    NodeSamples rho = rho_samples(omega, xis, g, split_q);

    Forcing fw, fz;
    if (rate.is_zero()) {
        fw.value = lags([&](double x) { return sf.w(x); }, n, h);
        fz.value = lags([&](double x) { return sf.z(x); }, n, h);
        std::vector<double> dw = lags([&](double x) { return sf.w_prime(x); }, n, h), dz(fw.value.size());
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = split_q * fw.value[i];
        fw.deriv = NodeSamples::continuous(dw);
        fz.deriv = NodeSamples::continuous(dz);
        fw.deriv.left[0] = fz.deriv.left[0] = 0.0;
    } else {
        ScalePair lvl = level_scale(model, split_q, rate, g);
        fw = forcing_from(lvl.w);
        fz = forcing_from(lvl.z);
    }
    std::vector<OmegaSolution> sol = solve_omega(sf, g, rate, xis, rho, {&fw, &fz});

    std::ostringstream os;
    os.precision(17);
    os << describe(model, split_q, rate) << " omega=" << omega.describe();
    bool classical = rate.is_zero();
    SolveMethod method = classical ? SolveMethod::Convolution : SolveMethod::Sweep;
    ScalePair out;
    out.w = make_table(classical ? Family::OmegaW : Family::OmegaLevelW, g.d(), split_q, g, sol[0].value,
                       derivative_table(g, sol[0].d_right, sol[0].d_left), method, os.str(), LeftExtension::Zero);
    out.z = make_table(classical ? Family::OmegaZ : Family::OmegaLevelZ, g.d(), split_q, g, sol[1].value,
                       derivative_table(g, sol[1].d_right, sol[1].d_left), method, os.str(), LeftExtension::One);
    return out;
}

ScaleTable omega_h_core(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                        const Grid& g) {
    if (!omega.left_tail_value())
        throw PreconditionError("omega_h: omega needs a left tail value p (omega = p on (-inf, 0])");
    if (std::abs(g.d()) > 1e-12) throw PreconditionError("omega_h: grid must start at 0");
    const double p = *omega.left_tail_value();
    const double h = g.h();
    int m = 0;
    if (!rate.is_zero() && rate.d_prime() < 0.0) m = static_cast<int>(std::ceil(-rate.d_prime() / h - 1e-9));
    Grid ug(-m * h, g.a(), g.n() + m);
    ScaleTable u = u_function(model, p, rate, ug);

    NodeSamples xis = xi_samples(model, rate, g);
    NodeSamples rho = rho_samples(omega, xis, g, p);
    Forcing fu = forcing_from(u, m);
    ScaleFunction sf(model, p);
    OmegaSolution sol = solve_omega(sf, g, rate, xis, rho, {&fu})[0];

    std::vector<double> v = u.table.values, dr(v.size()), dl(v.size());
    for (int i = 0; i < ug.size(); ++i) {
        dr[i] = u.derivative.right(i);
        dl[i] = u.derivative.left(i);
    }
    for (int i = 0; i < g.size(); ++i) {
        v[m + i] = sol.value[i];
        dr[m + i] = sol.d_right[i];
        if (i > 0) dl[m + i] = sol.d_left[i];
    }
    std::ostringstream os;
    os.precision(17);
    os << describe(model, p, rate) << " omega=" << omega.describe();
    return make_table(rate.is_zero() ? Family::OmegaH : Family::OmegaLevelH, 0.0, p, ug, std::move(v),
                      derivative_table(ug, std::move(dr), std::move(dl)),
                      rate.is_zero() ? SolveMethod::Convolution : SolveMethod::Sweep, os.str(),
                      LeftExtension::Exponential, sf.phi());
}

}  // namespace

TailConstant tail_ratio(const std::string& name, const ScaleTable& num, const ScaleTable& den) {
    const Grid& g = den.grid();
    int n = g.n();
    int back = std::max(1, n / 8);
    double x1 = g.node(n), x0 = g.node(n - back);
    TailConstant c;
    c.name = name;
    c.checkpoint = x1;
    c.previous_checkpoint = x0;
    c.value = num.value(x1) / den.value(x1);
    c.previous = num.value(x0) / den.value(x0);
    double scale = std::abs(c.value);
    c.change = scale > 0.0 ? std::abs(c.value - c.previous) / scale : std::abs(c.value - c.previous);
    c.converged = std::isfinite(c.value) && c.change < kTailTolerance;
    return c;
}

double require_converged(const TailConstant& c) {
    if (!c.converged) {
        std::ostringstream os;
        os << c.name << ": ratio changed by " << c.change << " between x=" << c.previous_checkpoint
           << " and x=" << c.checkpoint << " (need < " << kTailTolerance << "); extend grid";
        throw ConvergenceError(os.str(), c.change);
    }
    return c.value;
}

DerivedConstants derived_constants(const DerivedInputs& in) {
    DerivedConstants out;
    if (in.w && in.z) out.C_q = tail_ratio("C_q", *in.z, *in.w);
    if (in.w && in.w_shifted) out.c_q = tail_ratio("c_q", *in.w_shifted, *in.w);
    if (in.omega_w && in.omega_z) out.a_zw = tail_ratio("a_zw", *in.omega_z, *in.omega_w);
    return out;
}

}  // namespace snlp
