#include "core/common.hpp"

#include <cmath>
#include <iostream>

namespace mcf {

void log_warn(const std::string& msg) { std::cerr << "[mcfusion] warning: " << msg << "\n"; }

void log_info(const std::string& msg) { std::cerr << "[mcfusion] " << msg << "\n"; }

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t parent, std::string_view label) {
  return splitmix64(parent ^ fnv1a64(label));
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw InvalidArgument("Rng::uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return lo + static_cast<int64_t>(draw % span);
}

double Rng::normal() {
  // Box-Muller; u1 is kept away from zero so log() stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace mcf
