#pragma once

#include <cstdint>

namespace seqmco {

// Counter-based random stream. A draw at position p is a pure function of
// (seed, stream_id, p), so identical (seed, stream_id) pairs reproduce the
// same sequence regardless of thread layout, and distinct stream_ids give
// statistically independent streams.
//
// Stream-splitting convention used throughout the library:
//   * one stream per (replicate, particle);
//   * substream(0) of a filter's stream feeds resampling draws, so proposal
//     noise is identical across resampling policies under a shared seed;
//   * substream(1 + i) feeds proposal noise for particle i.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t position() const { return pos_; }

  // Derived independent stream; does not advance this stream.
  RngStream substream(std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; consumes two positions per draw so the
  // position layout is independent of caller patterns.
  double gaussian();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t pos_ = 0;
};

}  // namespace seqmco
