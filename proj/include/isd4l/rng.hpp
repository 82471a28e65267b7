#pragma once

#include <cstdint>

namespace isd4l {

// Reproducibility contract: every random decision in the pipeline flows
// through the generators below. No std::random_device, no
// std::uniform_*_distribution (their outputs differ across standard library
// implementations); results are identical on any platform for a given seed.

// SplitMix64 step (Steele, Lea, Flood 2014; public domain reference
// constants). Used for seeding and for deriving sub-stream seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stateless SplitMix64 finalizer (mixes a single word).
inline std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t s = x;
  return splitmix64_next(s);
}

// Stream-splitting rule: sub-stream k of master seed s is seeded with
//   mix64(s ^ mix64(domain ^ 0x1F0E524F75717A93 * (k + 1)))
// where `domain` separates independent uses of the same master seed
// (patch sampling, fold training, ...). Deterministic, order-free, O(1).
enum class StreamDomain : std::uint64_t {
  patch_sampling = 0x5041544348ULL,  // per source image
  fold_training = 0x464F4C44ULL,     // per LOO fold
  training = 0x545241494EULL,        // standalone training run
  synthesis = 0x53594E5448ULL,       // per synthetic image
};

inline std::uint64_t derive_stream_seed(std::uint64_t seed, StreamDomain domain,
                                        std::uint64_t index) {
  std::uint64_t label =
      static_cast<std::uint64_t>(domain) ^ (0x1F0E524F75717A93ULL * (index + 1));
  return mix64(seed ^ mix64(label));
}

// xoshiro256++ (Blackman, Vigna 2019; public domain reference constants).
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64_next(sm);
  }

  static Xoshiro256pp stream(std::uint64_t seed, StreamDomain domain,
                             std::uint64_t index) {
    return Xoshiro256pp(derive_stream_seed(seed, domain, index));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53 significant bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer on [lo, hi], both inclusive (Lemire 2019).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next());  // full 64-bit span
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
      const std::uint64_t threshold = (0 - range) % range;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * range;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return lo + static_cast<std::int64_t>(m >> 64);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
};

// Injection point for randomness consumers that tests need to steer
// (e.g. a stub returning the midpoint of every requested range).
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual double unit() = 0;                                     // [0, 1)
  virtual std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) = 0;
};

class XoshiroSource final : public RandomSource {
 public:
  explicit XoshiroSource(Xoshiro256pp rng) : rng_(rng) {}
  explicit XoshiroSource(std::uint64_t seed) : rng_(seed) {}

  double unit() override { return rng_.unit(); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) override {
    return rng_.uniform_int(lo, hi);
  }

  Xoshiro256pp& engine() { return rng_; }

 private:
  Xoshiro256pp rng_;
};

}  // namespace isd4l
