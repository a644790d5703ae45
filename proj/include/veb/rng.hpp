#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace veb {

// Philox4x32-10 counter-based generator. A stream is identified by
// (key = master seed, stream id held in the upper counter words); every draw
// is a pure function of (key, counter), so streams indexed by replicate are
// mutually independent and reproducible no matter how many replicates run or
// in which order. Constants follow the reference Philox specification.
class Philox {
 public:
  explicit Philox(uint64_t seed, uint64_t stream = 0) {
    key_[0] = static_cast<uint32_t>(seed);
    key_[1] = static_cast<uint32_t>(seed >> 32);
    ctr_ = {0u, 0u, static_cast<uint32_t>(stream),
            static_cast<uint32_t>(stream >> 32)};
  }

  using result_type = uint32_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }

  uint32_t operator()() { return next_u32(); }

  uint32_t next_u32() {
    if (avail_ == 0) refill();
    return buf_[--avail_];
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform on (0,1) with 53 random bits; never returns 0 or 1.
  double u01() {
    uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Standard normal via Box-Muller; the rotated mate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = u01();
    double u2 = u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr uint32_t kMul0 = 0xD2511F53u;
  static constexpr uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

  static void round_once(std::array<uint32_t, 4>& x, uint32_t k0, uint32_t k1) {
    uint64_t p0 = static_cast<uint64_t>(kMul0) * x[0];
    uint64_t p1 = static_cast<uint64_t>(kMul1) * x[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
    uint32_t lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
    uint32_t lo1 = static_cast<uint32_t>(p1);
    x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
  }

  void refill() {
    std::array<uint32_t, 4> x = ctr_;
    uint32_t k0 = key_[0], k1 = key_[1];
    for (int r = 0; r < 10; ++r) {
      round_once(x, k0, k1);
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    buf_ = x;
    avail_ = 4;
    if (++ctr_[0] == 0) ++ctr_[1];  // 64-bit position increment
  }

  std::array<uint32_t, 2> key_{};
  std::array<uint32_t, 4> ctr_{};
  std::array<uint32_t, 4> buf_{};
  int avail_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream-id layout used across the harness: a purpose tag in the top byte
// keeps design, replicate-data, sampler, and Monte Carlo streams disjoint.
enum class StreamPurpose : uint64_t {
  Design = 1,
  Replicate = 2,
  Gibbs = 3,
  MonteCarlo = 4,
  Scratch = 5,
};

inline uint64_t stream_id(StreamPurpose purpose, uint64_t group, uint64_t index) {
  return (static_cast<uint64_t>(purpose) << 56) | ((group & 0xFFFFFFu) << 32) |
         (index & 0xFFFFFFFFu);
}

}  // namespace veb
