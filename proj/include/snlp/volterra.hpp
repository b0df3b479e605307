#pragma once

#include <functional>
#include <optional>
#include <vector>

namespace snlp {

class Grid {
public:
    Grid() : Grid(0.0, 1.0, 1) {}
    Grid(double d, double a, int n);
    // n = round((a - d) * per_unit), at least 1.
    static Grid with_density(double d, double a, int per_unit);

    double d() const noexcept { return d_; }
    double a() const noexcept { return a_; }
    int n() const noexcept { return n_; }
    double h() const noexcept { return (a_ - d_) / n_; }
    double node(int i) const noexcept { return i == n_ ? a_ : d_ + i * h(); }
    int size() const noexcept { return n_ + 1; }
    // Index of the node at x (within 1e-9 h), if any.
    std::optional<int> node_index(double x) const;
    bool contains(double x) const;

private:
    double d_;
    double a_;
    int n_;
};

// One-sided limits of a piecewise function at the grid nodes.
struct NodeSamples {
    std::vector<double> left;
    std::vector<double> right;

    static NodeSamples continuous(std::vector<double> values);
    static NodeSamples constant(int size, double value);
    std::size_t size() const noexcept { return right.size(); }
};

enum class SolveMethod { Marching, Neumann, Quadrature, Convolution, Sweep };

const char* method_name(SolveMethod m);

struct SolutionTable {
    Grid grid;
    std::vector<double> values;       // right limits at nodes
    std::vector<double> left_limits;  // empty when the function is continuous
    SolveMethod method = SolveMethod::Marching;
    int iterations = 0;

    double right(int i) const { return values[static_cast<std::size_t>(i)]; }
    double left(int i) const {
        return left_limits.empty() ? values[static_cast<std::size_t>(i)]
                                   : left_limits[static_cast<std::size_t>(i)];
    }
    // Linear interpolation between x_j+ and x_{j+1}-; node values are right limits.
    double value_at(double x) const;
    double left_value_at(double x) const;
};

struct VolterraProblem {
    Grid grid;
    std::function<double(double, double)> kernel;  // K(x, y), used for y <= x
    std::function<double(double)> forcing;
};

SolutionTable solve_marching(const VolterraProblem& problem);
SolutionTable solve_neumann(const VolterraProblem& problem, int max_iter = 200, double tol = 1e-10);

// Cumulative trapezoid of a piecewise-continuous table, anchored at x_0.
SolutionTable integrate_table(const SolutionTable& derivative, double anchor);
SolutionTable integrate_samples(const Grid& grid, const std::vector<double>& values, double anchor);

// u(x) = A(x) [ g(x) + int_d^x k(x - y) B(y) u(y) dy ] with k tabulated at lags m h
// (k[0] is the right limit k(0+)); A, B, g may jump at nodes.
struct ConvolutionProblem {
    Grid grid;
    std::vector<double> lag_kernel;
    NodeSamples outer;
    NodeSamples inner;
    NodeSamples forcing;
};

SolutionTable solve_convolution(const ConvolutionProblem& problem);

}  // namespace snlp
