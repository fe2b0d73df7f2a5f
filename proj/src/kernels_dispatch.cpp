#include "pcedtr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace pcedtr::kern {

#if PCEDTR_HAVE_AVX2
const Ops& avx2_ops();
#endif

namespace {

bool cpu_has_avx2() {
#if PCEDTR_HAVE_AVX2 && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa pick_initial() {
  if (const char* env = std::getenv("PCEDTR_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa> g_isa{pick_initial()};

}  // namespace

bool have_avx2() { return cpu_has_avx2(); }

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2()) isa = Isa::scalar;
  g_isa.store(isa, std::memory_order_relaxed);
}

const Ops& ops() {
#if PCEDTR_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2_ops();
#endif
  return scalar_ops();
}

}  // namespace pcedtr::kern
