#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pcgnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// signal_io
struct NotWav : Error { using Error::Error; };
struct UnsupportedEncoding : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct MalformedHeader : Error { using Error::Error; };
struct UnknownLabel : Error { using Error::Error; };
struct MissingAudio : Error { using Error::Error; };
struct InsufficientPatients : Error { using Error::Error; };

// dsp
struct InvalidCutoff : Error { using Error::Error; };
struct NonIntegerFactor : Error { using Error::Error; };
struct EmptySignal : Error { using Error::Error; };

// autodiff / model
struct ShapeMismatch : Error { using Error::Error; };
struct NonDistribution : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };
struct FingerprintMismatch : Error { using Error::Error; };
struct CorruptFile : Error { using Error::Error; };

// train
struct MissingClass : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };

// evaluate
struct EmptyGroup : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct EmptySite : Error { using Error::Error; };

// synth
struct InvalidSpec : Error { using Error::Error; };

namespace detail {

// SplitMix64 step; used to derive independent child seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = seed;
  std::uint64_t h = splitmix64(s);
  s ^= a + 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(s);
  s ^= b + 0xc2b2ae3d27d4eb4fULL;
  h ^= splitmix64(s);
  return h;
}

// FNV-1a over a byte string; stable across platforms.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320U ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffU;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xffU] ^ (crc >> 8);
  return crc ^ 0xffffffffU;
}

}  // namespace detail
}  // namespace pcgnet
