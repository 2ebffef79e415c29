#pragma once

#include <cstdint>
#include <random>

namespace gbn {

namespace detail {

// splitmix64; used only to decorrelate (seed, stream) pairs before they
// enter the Mersenne twister.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Seeded random stream. Identical (seed, stream) gives an identical draw
// sequence; substreams derived from the same seed with distinct stream ids
// start from decorrelated twister states and may be used concurrently.
// A single RngStream must not be shared across concurrent callers.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{detail::mix64(seed), detail::mix64(stream ^ 0xA5A5A5A5A5A5A5A5ULL),
                      seed, stream};
    gen_.seed(seq);
  }

  // Independent stream keyed by (seed, id) relative to this stream.
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, detail::mix64(stream_ ^ detail::mix64(id + 1)));
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return gen_(); }

  // Uniform on [0,1).
  double uniform() {
    return std::generate_canonical<double, 53>(gen_);
  }

  // Uniform on (0,1); never returns exactly zero.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 gen_;
};

}  // namespace gbn
