#include "v2s/rng.hpp"

#include <cmath>

namespace v2s {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Basic Box-Muller; u is kept away from 0 so log() stays finite.
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * M_PI * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (const char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fold(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  return splitmix64(fold(fnv1a(tag), seed));
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
  return splitmix64(fold(fold(fnv1a(tag), seed), a));
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b) {
  return splitmix64(fold(fold(fold(fnv1a(tag), seed), a), b));
}

}  // namespace v2s
