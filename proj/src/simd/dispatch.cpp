#include <atomic>
#include <cstdlib>
#include <string_view>

#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels* initial_table() {
  const char* env = std::getenv("GSAVATAR_SIMD");
  if (env != nullptr && std::string_view(env) == "scalar") return &scalar_kernels();
  if (const Kernels* avx = avx2_kernels()) return avx;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& current() {
  static std::atomic<const Kernels*> table{initial_table()};
  return table;
}

}  // namespace

const Kernels* avx2_kernels() {
  static const bool supported = cpu_has_avx2();
  return supported ? detail::avx2_table() : nullptr;
}

const Kernels& active() { return *current().load(std::memory_order_acquire); }

Level active_level() { return active().level; }

void set_level(Level level) {
  if (level == Level::Avx2 && avx2_kernels() != nullptr) {
    current().store(avx2_kernels(), std::memory_order_release);
  } else {
    current().store(&scalar_kernels(), std::memory_order_release);
  }
}

const char* to_string(Level level) { return level == Level::Avx2 ? "avx2" : "scalar"; }

}  // namespace gsavatar::simd
