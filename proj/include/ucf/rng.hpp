#pragma once

#include <cstdint>
#include <stdexcept>

namespace ucf {

/// Purpose tags for derived substreams. Keeping unrelated consumers on
/// separate domains means adding a new consumer never shifts the values
/// an existing one sees.
enum class StreamDomain : std::uint64_t {
  init = 0x11,
  mask = 0x22,
  batch = 0x33,
  synth = 0x44,
  sweep = 0x55,
  general = 0x66,
};

/// Deterministic counter-based random stream (splitmix64 core).
///
/// Streams are derived from (seed, key0, key1, key2) by chaining the
/// splitmix64 finalizer, so the k-th draw of a given derivation is a pure
/// function of those keys. Two streams with different keys are independent
/// for practical purposes and no global state is involved.
class RngStream {
public:
  RngStream() = default;

  explicit RngStream(std::uint64_t seed) : state_(finalize(seed + kGamma)) {}

  static RngStream derive(std::uint64_t seed, std::uint64_t key0,
                          std::uint64_t key1 = 0, std::uint64_t key2 = 0) {
    std::uint64_t s = finalize(seed + kGamma);
    s = finalize(s ^ (key0 + kGamma));
    s = finalize(s ^ (key1 + kGamma));
    s = finalize(s ^ (key2 + kGamma));
    RngStream r;
    r.state_ = s;
    return r;
  }

  static RngStream derive(std::uint64_t seed, StreamDomain domain,
                          std::uint64_t key1 = 0, std::uint64_t key2 = 0) {
    return derive(seed, static_cast<std::uint64_t>(domain), key1, key2);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return finalize(state_);
  }

  /// Uniform in [0,1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  /// Uniform integer in [0,n). Lemire multiply-shift; negligible bias for
  /// the n used here (dataset and grid sizes).
  std::uint64_t next_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_index: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// True with probability p. p=0 never fires, p=1 always does.
  bool next_bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("next_bernoulli: p must be in [0,1]");
    return next_double() < p;
  }

private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0x853c49e6748fea9bull;
};

}  // namespace ucf
