#include "snlp/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace snlp::simd::avx2 {

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc0 = _mm256_add_pd(acc0, acc1);
    __m128d lo = _mm256_castpd256_pd128(acc0);
    __m128d hi = _mm256_extractf128_pd(acc0, 1);
    lo = _mm_add_pd(lo, hi);
    double s = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void sweep_advance(const SweepState& st, const SweepRow& row) {
    const double hh = 0.5 * row.h;
    const std::size_t K = st.terms;
    const __m256d vhh = _mm256_set1_pd(hh);
    const __m256d vh = _mm256_set1_pd(row.h);
    const __m256d vfp = _mm256_set1_pd(row.phi_prev_right);
    const __m256d vfl = _mm256_set1_pd(hh * row.phi_left);
    const __m256d vden = _mm256_set1_pd(row.inv_den);
    const __m256d vxi = _mm256_set1_pd(row.inv_xi_right);
    const __m256d vdiag = _mm256_set1_pd(hh * row.k0 * row.phi_left);
    __m256d ve[kMaxTerms], vc[kMaxTerms], vd[kMaxTerms];
    for (std::size_t k = 0; k < K; ++k) {
        ve[k] = _mm256_set1_pd(row.e[k]);
        vc[k] = _mm256_set1_pd(row.c[k]);
        vd[k] = _mm256_set1_pd(row.d[k]);
    }
    std::size_t j = 0;
    for (; j + 4 <= row.ncols; j += 4) {
        __m256d uR = _mm256_loadu_pd(st.u_right + j);
        __m256d hfi = _mm256_mul_pd(vhh, _mm256_mul_pd(vfp, uR));
        __m256d p[kMaxTerms], tt[kMaxTerms];
        __m256d integral = _mm256_loadu_pd(row.forcing + j);
        for (std::size_t k = 0; k < K; ++k) {
            __m256d sh = _mm256_add_pd(_mm256_loadu_pd(st.s[k] + j), hfi);
            p[k] = _mm256_mul_pd(ve[k], sh);
            tt[k] = _mm256_mul_pd(ve[k], _mm256_fmadd_pd(vh, sh, _mm256_loadu_pd(st.t[k] + j)));
            integral = _mm256_fmadd_pd(vc[k], p[k], integral);
            integral = _mm256_fmadd_pd(vd[k], tt[k], integral);
        }
        __m256d um = _mm256_mul_pd(integral, vden);
        __m256d up = _mm256_mul_pd(_mm256_fmadd_pd(vdiag, um, integral), vxi);
        __m256d add = _mm256_mul_pd(vfl, um);
        for (std::size_t k = 0; k < K; ++k) {
            _mm256_storeu_pd(st.s[k] + j, _mm256_add_pd(p[k], add));
            _mm256_storeu_pd(st.t[k] + j, tt[k]);
        }
        __m256d val = _mm256_loadu_pd(st.value + j);
        val = _mm256_fmadd_pd(vhh, _mm256_add_pd(uR, um), val);
        _mm256_storeu_pd(st.value + j, val);
        _mm256_storeu_pd(st.u_right + j, up);
        _mm256_storeu_pd(st.u_left + j, um);
    }
    if (j < row.ncols) {
        SweepState tail = st;
        for (std::size_t k = 0; k < K; ++k) {
            tail.s[k] += j;
            tail.t[k] += j;
        }
        tail.u_right += j;
        tail.u_left += j;
        tail.value += j;
        SweepRow rt = row;
        rt.forcing += j;
        rt.ncols -= j;
        scalar::sweep_advance(tail, rt);
    }
}

}  // namespace snlp::simd::avx2

#else

namespace snlp::simd::avx2 {
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void sweep_advance(const SweepState& st, const SweepRow& row) { scalar::sweep_advance(st, row); }
}  // namespace snlp::simd::avx2

#endif
