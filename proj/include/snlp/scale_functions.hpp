#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snlp/levy_model.hpp"
#include "snlp/rate.hpp"
#include "snlp/volterra.hpp"

namespace snlp {

enum class Family {
    LevelW,
    LevelZ,
    LevelWPrime,
    LevelZPrime,
    MultiW_k,
    MultiZ_k,
    UFunc,
    OmegaW,
    OmegaZ,
    OmegaH,
    OmegaLevelW,
    OmegaLevelZ,
    OmegaLevelH
};

const char* family_name(Family f);
std::optional<Family> parse_family(const std::string& name);

// How a table continues to the left of its grid.
enum class LeftExtension { Zero, One, Exponential };

struct ScaleTable {
    Family family = Family::LevelW;
    double shift = 0.0;
    double q_shift = 0.0;
    SolutionTable table;
    SolutionTable derivative;  // right limits in values, left limits in left_limits
    std::string params;
    LeftExtension extension = LeftExtension::Zero;
    double extension_rate = 0.0;  // e^{rate x} for Exponential

    const Grid& grid() const noexcept { return table.grid; }
    double value(double x) const;
    double right_derivative(double x) const;
    double left_derivative(double x) const;
};

struct ScalePair {
    ScaleTable w;
    ScaleTable z;
};

// Level-dependent W^(q)(.;d), Z^(q)(.;d) with d = grid.d(). Extrapolation as for the omega
// families below.
ScalePair level_scale(const ModelSpec& model, double q, const RateFunction& rate, const Grid& grid,
                      bool extrapolate = true);

// Multi-refracted W_k, Z_k by the k-step recursion over drift-changed models; shift grid.d().
ScalePair multi_refracted_scale(const ModelSpec& model, double q, const RateFunction& steps,
                                const Grid& grid, bool extrapolate = true);

double lemma14_closed_form(const ModelSpec& model, double q, const RateFunction& steps, double x,
                           double y);

// u^(q) on grid; requires grid.d() <= d'.
ScaleTable u_function(const ModelSpec& model, double q, const RateFunction& rate, const Grid& grid);

// Omega-killed (level-dependent) scale functions with shift y = grid.d(), split at q.
// With extrapolate, the h and 2h solutions are Richardson-combined when every jump of
// phi and omega sits on a node of the coarse grid.
ScalePair omega_level_scale(const ModelSpec& model, const OmegaFunction& omega,
                            const RateFunction& rate, const Grid& grid, double split_q = 0.0,
                            bool extrapolate = true);

// H^(omega) on [min(0, d'), grid.a()] with the density of grid; requires omega's left tail value.
ScaleTable omega_h(const ModelSpec& model, const OmegaFunction& omega, const RateFunction& rate,
                   const Grid& grid, bool extrapolate = true);

// (4 fine - coarse) / 3 on coarse nodes; the correction is interpolated at the odd fine nodes.
ScaleTable richardson(const ScaleTable& fine, const ScaleTable& coarse);

struct TailConstant {
    std::string name;
    double value = 0.0;
    double previous = 0.0;
    double change = 0.0;  // relative change between the two checkpoints
    double checkpoint = 0.0;
    double previous_checkpoint = 0.0;
    bool converged = false;
};

constexpr double kTailTolerance = 1e-5;

// Ratio num/den at the last grid node against the node L/8 before it.
TailConstant tail_ratio(const std::string& name, const ScaleTable& num, const ScaleTable& den);
// Returns the value or throws ConvergenceError asking for a longer grid.
double require_converged(const TailConstant& c);

struct DerivedConstants {
    std::optional<TailConstant> C_q;   // lim Z(a)/W(a)
    std::optional<TailConstant> c_q;   // lim W(a;y)/W(a;d)
    std::optional<TailConstant> a_zw;  // lim Zcal(a)/Wcal(a) (omega families)
};

struct DerivedInputs {
    const ScaleTable* w = nullptr;
    const ScaleTable* z = nullptr;
    const ScaleTable* w_shifted = nullptr;  // W(.;y) over the same right end
    const ScaleTable* omega_w = nullptr;
    const ScaleTable* omega_z = nullptr;
};

DerivedConstants derived_constants(const DerivedInputs& in);

}  // namespace snlp
