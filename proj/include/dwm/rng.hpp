#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace dwm {

// Every random draw in the library comes from a counter-based stream keyed by
// (seed, agent, purpose, context). Streams are stateless beyond a block
// counter, so any (episode, slot) can be regenerated without replaying the
// history before it. Streams are single-owner; never share one across agents.
enum class Purpose : std::uint32_t {
  kGeometry = 1,     // user placement, LoS phases, per-episode layout
  kFadingInit = 2,   // g(0) draws
  kFadingStep = 3,   // innovation process e(t)
  kParamInit = 4,    // network weight initialisation
  kPolicyNoise = 5,  // action sampling during collection
  kLatentNoise = 6,  // posterior sampling during collection
  kGateNoise = 7,    // gate Bernoulli sampling
  kTrainNoise = 8,   // reparameterised draws inside updates
  kReplaySample = 9, // replay episode selection
  kEvalNoise = 10,   // evaluation-only draws
  kGeneric = 11,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Block4x32 {
  std::uint32_t w[4];
};

// Philox4x32-10 (Salmon et al. counter-based generator).
inline Block4x32 philox4x32(std::uint64_t key, std::uint64_t ctr_lo, std::uint64_t ctr_hi) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
  std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
  std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = 0xD2511F53ull * c0;
    const std::uint64_t p1 = 0xCD9E8D57ull * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t n0 = hi1 ^ c1 ^ k0;
    const std::uint32_t n1 = lo1;
    const std::uint32_t n2 = hi0 ^ c3 ^ k1;
    const std::uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return {{c0, c1, c2, c3}};
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t agent, Purpose purpose, std::uint64_t context = 0)
      : ctx_(detail::splitmix64(context ^ 0x2545F4914F6CDD1Dull)) {
    std::uint64_t k = detail::splitmix64(seed);
    k = detail::splitmix64(k ^ (static_cast<std::uint64_t>(agent) + 0x632BE59BD9B4E019ull));
    key_ = detail::splitmix64(k ^ (static_cast<std::uint64_t>(purpose) * 0xFF51AFD7ED558CCDull));
  }

  std::uint64_t bits() {
    if (avail_ == 0) {
      const detail::Block4x32 b = detail::philox4x32(key_, block_++, ctx_);
      buf_[0] = (static_cast<std::uint64_t>(b.w[1]) << 32) | b.w[0];
      buf_[1] = (static_cast<std::uint64_t>(b.w[3]) << 32) | b.w[2];
      avail_ = 2;
    }
    return buf_[--avail_];
  }

  // [0, 1)
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits()) * n) >> 64);
  }

  // standard normal via Box-Muller; the unused half of each pair is cached
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

  // circularly-symmetric complex normal with E|z|^2 = 1
  std::complex<double> cnormal() {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    const double re = normal() * kInvSqrt2;
    const double im = normal() * kInvSqrt2;
    return {re, im};
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t ctx_ = 0;
  std::uint64_t block_ = 0;
  std::uint64_t buf_[2] = {0, 0};
  int avail_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace dwm
