#pragma once

#include <cstddef>

namespace snlp::simd {

enum class Level { Scalar, Avx2 };

// Best level the CPU supports.
Level detected_level();
// Level in use; defaults to detected_level(), overridable via SNLP_SIMD=scalar|avx2.
Level active_level();
// Throws UnsupportedError if the CPU lacks the requested level.
void set_level(Level level);
const char* level_name(Level level);

constexpr std::size_t kMaxTerms = 3;

// Column state of the level-dependent kernel sweep, struct-of-arrays over columns.
struct SweepState {
    std::size_t terms = 0;
    double* s[kMaxTerms] = {};
    double* t[kMaxTerms] = {};
    double* u_right = nullptr;
    double* u_left = nullptr;
    double* value = nullptr;
};

// Row constants for advancing every live column from x_i to x_{i+1}.
// The kernel is k(t) = sum_k (c_k + d_k t) e^{r_k t} with e_k = e^{r_k h}.
struct SweepRow {
    double e[kMaxTerms] = {};
    double c[kMaxTerms] = {};
    double d[kMaxTerms] = {};
    double h = 0.0;
    double k0 = 0.0;              // k(0+)
    double phi_prev_right = 0.0;  // phi(x_i+)
    double phi_left = 0.0;        // phi(x_{i+1}-)
    double inv_den = 0.0;         // 1 / (Xi(x_{i+1}-) - h/2 k0 phi_left)
    double inv_xi_right = 0.0;    // 1 / Xi(x_{i+1}+)
    const double* forcing = nullptr;  // forcing[j] for column j at x_{i+1}
    std::size_t ncols = 0;
};

double dot(const double* a, const double* b, std::size_t n);
void sweep_advance(const SweepState& state, const SweepRow& row);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void sweep_advance(const SweepState& state, const SweepRow& row);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void sweep_advance(const SweepState& state, const SweepRow& row);
}  // namespace avx2

}  // namespace snlp::simd
