#include "snlp/simd/kernels.hpp"

namespace snlp::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void sweep_advance(const SweepState& st, const SweepRow& row) {
    const double hh = 0.5 * row.h;
    const double diag = hh * row.k0 * row.phi_left;
    for (std::size_t j = 0; j < row.ncols; ++j) {
        double fi = row.phi_prev_right * st.u_right[j];
        double p[kMaxTerms], tt[kMaxTerms];
        double integral = 0.0;
        for (std::size_t k = 0; k < st.terms; ++k) {
            double sh = st.s[k][j] + hh * fi;
            p[k] = row.e[k] * sh;
            tt[k] = row.e[k] * (st.t[k][j] + row.h * sh);
            integral += row.c[k] * p[k] + row.d[k] * tt[k];
        }
        double rest = row.forcing[j] + integral;
        double um = rest * row.inv_den;
        double up = (rest + diag * um) * row.inv_xi_right;
        double add = hh * row.phi_left * um;
        for (std::size_t k = 0; k < st.terms; ++k) {
            st.s[k][j] = p[k] + add;
            st.t[k][j] = tt[k];
        }
        st.value[j] += hh * (st.u_right[j] + um);
        st.u_right[j] = up;
        st.u_left[j] = um;
    }
}

}  // namespace snlp::simd::scalar
