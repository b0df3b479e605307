#include <atomic>
#include <cstdlib>
#include <string>

#include "snlp/errors.hpp"
#include "snlp/simd/kernels.hpp"

namespace snlp::simd {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Level initial_level() {
    Level best = detected_level();
    if (const char* env = std::getenv("SNLP_SIMD")) {
        std::string v(env);
        if (v == "scalar") return Level::Scalar;
        if (v == "avx2" && best == Level::Avx2) return Level::Avx2;
    }
    return best;
}

std::atomic<Level>& current() {
    static std::atomic<Level> level{initial_level()};
    return level;
}

}  // namespace

Level detected_level() {
    static const Level level = cpu_has_avx2() ? Level::Avx2 : Level::Scalar;
    return level;
}

Level active_level() { return current().load(std::memory_order_relaxed); }

void set_level(Level level) {
    if (level == Level::Avx2 && detected_level() != Level::Avx2)
        throw UnsupportedError("simd: AVX2/FMA not available on this CPU");
    current().store(level, std::memory_order_relaxed);
}

const char* level_name(Level level) { return level == Level::Avx2 ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) {
    return active_level() == Level::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void sweep_advance(const SweepState& state, const SweepRow& row) {
    if (active_level() == Level::Avx2)
        avx2::sweep_advance(state, row);
    else
        scalar::sweep_advance(state, row);
}

}  // namespace snlp::simd
