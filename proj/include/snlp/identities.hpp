#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "snlp/levy_model.hpp"
#include "snlp/rate.hpp"
#include "snlp/scale_functions.hpp"

namespace snlp {

enum class Reflection { None, AtInfimum, AtSupremum };

const char* reflection_name(Reflection r);

struct ProcessKind {
    ModelSpec base;
    RateFunction rate = RateFunction::zero();
    OmegaFunction omega = OmegaFunction::constant(0.0);
    Reflection reflected = Reflection::None;

    bool classical() const { return rate.is_zero() && omega.is_constant(); }
    std::string describe() const;
};

struct ExitResult {
    double up = 0.0;
    double down = 0.0;
    std::string formula_id;
};

struct ResolventDensity {
    double x = 0.0;
    double y = 0.0;
    double a = 0.0;  // +inf for the half-line
    double density = 0.0;
    double atom = 0.0;  // mass at y = 0, supremum reflection only
    std::string formula_id;
};

struct SolverOptions {
    int n_per_unit = 4096;
    double upper = 4.0;  // right end of every table
    double tail_length = 16.0;
    int tail_per_unit = 256;
    bool extrapolate = true;
    int resolvent_rows = 128;
};

// Answers exit and resolvent queries for one process from scale tables built on demand.
// Tables are cached by shift; queries may run concurrently.
class FluctuationSolver {
public:
    explicit FluctuationSolver(ProcessKind kind, SolverOptions opt = {});

    const ProcessKind& kind() const noexcept { return kind_; }
    const SolverOptions& options() const noexcept { return opt_; }

    // Exit from [lower, a]: up through a, down below lower.
    ExitResult exit_two_sided(double x, double lower, double a) const;
    // Exit below lower with no upper barrier.
    double exit_one_sided_down(double x, double lower, std::string* formula_id = nullptr) const;
    // First passage above a; needs omega's left tail unless omega is constant.
    double exit_one_sided_up(double x, double a, std::string* formula_id = nullptr) const;

    // Killed on leaving [lower, a]; a = +inf gives the half-line resolvent.
    ResolventDensity resolvent_density(double x, double y, double lower, double a) const;
    // Killed only on passing above a.
    ResolventDensity resolvent_density_upward(double x, double y, double a) const;

    double reflected_exit(double x, double a, std::string* formula_id = nullptr) const;
    ResolventDensity reflected_resolvent_density(double x, double y, double a) const;
    // 1 - q * (resolvent mass of [0, a)), for constant omega = q.
    double consistency_qresolvent(double x, double a) const;

    // (direct, product) for A(x, z) = A(x, y) A(y, z); reflected uses the infimum exit C.
    std::pair<double, double> multiplicativity(double x, double y, double z, bool reflected) const;

    // Tables actually used, for export.
    ScalePair tables(double shift) const;
    ScaleTable h_table() const;

private:
    struct Scales;
    std::shared_ptr<const Scales> scales(double shift, bool tail) const;
    std::shared_ptr<const Scales> lattice_scales(double shift, bool tail) const;
    std::shared_ptr<const ScaleTable> h_cached() const;
    double inv_xi(double y, bool right) const;
    double tail_constant(const char* name, double lower) const;
    double shifted_ratio(double y, double lower) const;
    void check_upper(double a, const char* who) const;

    ProcessKind kind_;
    SolverOptions opt_;
    double q_ = 0.0;  // omega when constant
    mutable std::mutex mu_;
    mutable std::map<std::pair<double, bool>, std::shared_ptr<const Scales>> cache_;
    mutable std::shared_ptr<const ScaleTable> h_;
};

}  // namespace snlp
