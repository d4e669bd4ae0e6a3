#include "seqmco/rng.hpp"

#include <cmath>

namespace seqmco {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; bijective on u64.
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ (stream_id + 0x632BE59BD9B4E019ULL));
  return k;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(derive_key(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t index) const {
  RngStream child;
  child.seed_ = seed_;
  child.stream_id_ = mix64(key_ ^ (index + kGolden));
  child.key_ = derive_key(seed_, child.stream_id_);
  return child;
}

std::uint64_t RngStream::next_u64() {
  return mix64(key_ + (pos_++) * kGolden);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  // Rejection-free modulo is fine here: n is a particle count (tiny vs 2^64),
  // so the bias is below 2^-40.
  return next_u64() % n;
}

double RngStream::gaussian() {
  // (w + 0.5) * 2^-53 keeps u strictly inside (0, 1) for the log.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace seqmco
