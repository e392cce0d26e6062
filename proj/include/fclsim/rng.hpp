#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fclsim {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a key path such as
// (purpose, client, round, epoch). Streams depend only on the key, never on
// the order in which they are requested.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = mix64(seed);
  for (auto k : key) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed,
                    std::initializer_list<std::uint64_t> key) {
  return Rng(derive_seed(seed, key));
}

// Stream purposes, used as the first element of derive_seed keys.
enum class Stream : std::uint64_t {
  init = 1,
  split,
  partition,
  augment,
  synth,
  minibatch,
  teacher_minibatch,
  fisher,
  replay_store,
  replay_draw,
};

constexpr std::uint64_t key(Stream s) noexcept {
  return static_cast<std::uint64_t>(s);
}

}  // namespace fclsim
