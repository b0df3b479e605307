#include "snlp/volterra.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snlp/errors.hpp"
#include "snlp/simd/kernels.hpp"

namespace snlp {

Grid::Grid(double d, double a, int n) : d_(d), a_(a), n_(n) {
    if (!std::isfinite(d) || !std::isfinite(a) || !(a > d))
        throw DomainError("grid: need finite d < a");
    if (n < 1) throw DomainError("grid: need at least one cell");
}

Grid Grid::with_density(double d, double a, int per_unit) {
    if (per_unit < 1) throw DomainError("grid: density must be positive");
    long n = std::lround((a - d) * per_unit);
    return Grid(d, a, static_cast<int>(std::max(1L, n)));
}

std::optional<int> Grid::node_index(double x) const {
    double t = (x - d_) / h();
    long i = std::lround(t);
    if (i < 0 || i > n_) return std::nullopt;
    if (std::abs(t - static_cast<double>(i)) > 1e-9) return std::nullopt;
    return static_cast<int>(i);
}

bool Grid::contains(double x) const {
    double tol = 1e-12 * std::max(1.0, std::abs(a_) + std::abs(d_));
    return x >= d_ - tol && x <= a_ + tol;
}

NodeSamples NodeSamples::continuous(std::vector<double> values) {
    NodeSamples s;
    s.left = values;
    s.right = std::move(values);
    return s;
}

NodeSamples NodeSamples::constant(int size, double value) {
    return continuous(std::vector<double>(static_cast<std::size_t>(size), value));
}

const char* method_name(SolveMethod m) {
    switch (m) {
        case SolveMethod::Marching: return "marching";
        case SolveMethod::Neumann: return "neumann";
        case SolveMethod::Quadrature: return "quadrature";
        case SolveMethod::Convolution: return "convolution";
        case SolveMethod::Sweep: return "sweep";
    }
    return "unknown";
}

namespace {

void locate(const Grid& g, double x, int& j, double& t) {
    if (!g.contains(x)) {
        std::ostringstream os;
        os << "table lookup at x=" << x << " outside grid [" << g.d() << ", " << g.a()
           << "]; extend grid";
        throw DomainError(os.str());
    }
    if (auto idx = g.node_index(x)) {
        j = *idx;
        t = 0.0;
        return;
    }
    double s = (x - g.d()) / g.h();
    j = std::clamp(static_cast<int>(std::floor(s)), 0, g.n() - 1);
    t = s - j;
}

}  // namespace

double SolutionTable::value_at(double x) const {
    int j;
    double t;
    locate(grid, x, j, t);
    if (t == 0.0) return right(j);
    return (1.0 - t) * right(j) + t * left(j + 1);
}

double SolutionTable::left_value_at(double x) const {
    int j;
    double t;
    locate(grid, x, j, t);
    if (t == 0.0) return left(j);
    return (1.0 - t) * right(j) + t * left(j + 1);
}

SolutionTable solve_marching(const VolterraProblem& p) {
    const Grid& g = p.grid;
    const int n = g.n();
    const double h = g.h();
    std::vector<double> u(static_cast<std::size_t>(n + 1));
    std::vector<double> row(static_cast<std::size_t>(n + 1));
    u[0] = p.forcing(g.node(0));
    for (int i = 1; i <= n; ++i) {
        double xi = g.node(i);
        for (int j = 0; j < i; ++j) row[j] = p.kernel(xi, g.node(j));
        double s = 0.5 * row[0] * u[0];
        if (i > 1) s += simd::dot(row.data() + 1, u.data() + 1, static_cast<std::size_t>(i - 1));
        double diag = 0.5 * h * p.kernel(xi, xi);
        if (!(diag < 1.0)) {
            std::ostringstream os;
            os << "marching: h/2 K(x,x) = " << diag << " >= 1 at x=" << xi << "; refine the grid";
            throw StepSizeError(os.str());
        }
        u[i] = (p.forcing(xi) + h * s) / (1.0 - diag);
    }
    return SolutionTable{g, std::move(u), {}, SolveMethod::Marching, 0};
}

SolutionTable solve_neumann(const VolterraProblem& p, int max_iter, double tol) {
    const Grid& g = p.grid;
    const int n = g.n();
    const double h = g.h();
    // Packed lower triangle with trapezoid weights folded in.
    std::vector<std::size_t> start(static_cast<std::size_t>(n + 2));
    for (int i = 0; i <= n; ++i) start[i + 1] = start[i] + static_cast<std::size_t>(i + 1);
    std::vector<double> k(start[n + 1]);
    for (int i = 1; i <= n; ++i) {
        double xi = g.node(i);
        double* r = k.data() + start[i];
        for (int j = 0; j <= i; ++j) r[j] = h * p.kernel(xi, g.node(j));
        r[0] *= 0.5;
        r[i] *= 0.5;
    }
    std::vector<double> f(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) f[i] = p.forcing(g.node(i));
    std::vector<double> u = f, next(u.size());
    double change = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        next[0] = f[0];
        for (int i = 1; i <= n; ++i)
            next[i] = f[i] + simd::dot(k.data() + start[i], u.data(), static_cast<std::size_t>(i + 1));
        change = 0.0;
        for (int i = 0; i <= n; ++i) change = std::max(change, std::abs(next[i] - u[i]));
        u.swap(next);
        if (!std::isfinite(change)) break;
        if (change < tol) return SolutionTable{g, std::move(u), {}, SolveMethod::Neumann, it};
    }
    std::ostringstream os;
    os << "neumann: no convergence in " << max_iter << " iterations (last update " << change << ")";
    throw IterationError(os.str(), change);
}

SolutionTable integrate_table(const SolutionTable& der, double anchor) {
    const Grid& g = der.grid;
    std::vector<double> v(static_cast<std::size_t>(g.n() + 1));
    v[0] = anchor;
    const double hh = 0.5 * g.h();
    for (int i = 0; i < g.n(); ++i) v[i + 1] = v[i] + hh * (der.right(i) + der.left(i + 1));
    return SolutionTable{g, std::move(v), {}, SolveMethod::Quadrature, 0};
}

SolutionTable integrate_samples(const Grid& grid, const std::vector<double>& values, double anchor) {
    if (values.size() != static_cast<std::size_t>(grid.size()))
        throw DomainError("integrate_samples: sample count does not match grid");
    return integrate_table(SolutionTable{grid, values, {}, SolveMethod::Quadrature, 0}, anchor);
}

SolutionTable solve_convolution(const ConvolutionProblem& p) {
    const Grid& g = p.grid;
    const int n = g.n();
    const std::size_t N = static_cast<std::size_t>(n + 1);
    if (p.lag_kernel.size() < N || p.outer.size() != N || p.inner.size() != N || p.forcing.size() != N)
        throw DomainError("solve_convolution: sample arrays do not match grid");
    const double h = g.h();
    const double k0 = p.lag_kernel[0];
    // rev[m] = k((n - m) h) so that sum_j k_{i-j} F_j is a contiguous dot product.
    std::vector<double> rev(N);
    for (std::size_t m = 0; m < N; ++m) rev[m] = p.lag_kernel[N - 1 - m];
    std::vector<double> up(N), um(N), F(N);
    up[0] = p.outer.right[0] * p.forcing.right[0];
    um[0] = p.outer.left[0] * p.forcing.left[0];
    F[0] = 0.5 * p.inner.right[0] * up[0];
    bool jumps = p.outer.left != p.outer.right || p.inner.left != p.inner.right ||
                 p.forcing.left != p.forcing.right;
    for (int i = 1; i <= n; ++i) {
        double s = h * simd::dot(rev.data() + (n - i), F.data(), static_cast<std::size_t>(i));
        double Am = p.outer.left[i], Bm = p.inner.left[i];
        double den = 1.0 - Am * 0.5 * h * k0 * Bm;
        if (!(den > 0.0)) {
            std::ostringstream os;
            os << "convolution marching: singular diagonal at x=" << g.node(i) << "; refine the grid";
            throw StepSizeError(os.str());
        }
        um[i] = Am * (p.forcing.left[i] + s) / den;
        up[i] = p.outer.right[i] * (p.forcing.right[i] + s + 0.5 * h * k0 * Bm * um[i]);
        F[i] = 0.5 * (p.inner.right[i] * up[i] + Bm * um[i]);
    }
    SolutionTable t{g, std::move(up), {}, SolveMethod::Convolution, 0};
    if (jumps) t.left_limits = std::move(um);
    return t;
}

}  // namespace snlp
