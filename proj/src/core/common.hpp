#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcf {

// Base class for all toolkit errors surfaced through the C API.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

uint64_t fnv1a64(std::string_view s);
uint64_t splitmix64(uint64_t x);

// Deterministic child seed for a named pipeline stage.
uint64_t derive_seed(uint64_t parent, std::string_view label);

// Seeded RNG with explicit, engine-pinned distributions so that streams are
// reproducible bit-for-bit across reruns. std distributions are avoided on
// purpose; their sequences are not pinned by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range, rejection sampled to stay exactly uniform.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Box-Muller without caching so every call consumes exactly two draws.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream labeled by purpose; consumes one parent draw.
  Rng fork(std::string_view label) { return Rng(splitmix64(next_u64() ^ fnv1a64(label))); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcf
