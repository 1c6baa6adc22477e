#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xtra {

enum class Lang : int { L1 = 0, L2 = 1 };

inline const char* lang_tag(Lang l) { return l == Lang::L1 ? "l1" : "l2"; }
inline Lang other_lang(Lang l) { return l == Lang::L1 ? Lang::L2 : Lang::L1; }
inline int lang_index(Lang l) { return static_cast<int>(l); }

// Bad inputs, bad config, malformed files. The CLI maps these to exit code 1;
// anything else that escapes maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit FNV-1a. Used for vocabulary hashes and file provenance; stable
// across runs and platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

// SplitMix64 step; mixes a word into a stream seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic sub-stream derivation: rng_for(seed, a, b, c) is a pure
// function of its arguments, so per-document noise does not depend on the
// order documents are visited within a batch.
inline std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t a = 0,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(seed);
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b));
  s = mix64(s ^ mix64(c));
  return std::mt19937_64(s);
}

// Uniform in [0, 1) from the top 53 bits; pinned here so results do not
// depend on the standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller standard normal (cosine branch only), same portability rationale.
inline double std_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Fisher-Yates with raw modulo draws: std::shuffle's draw sequence is
// implementation-defined, this one is pinned.
template <class T>
void shuffle_det(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace xtra
