#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ionhom {

/// Timestamps and durations on the detector clock.
using Picoseconds = std::int64_t;

/// Every stochastic operation takes a caller-owned generator of this type.
using Rng = std::mt19937_64;

inline constexpr double kPsPerSecond = 1e12;

inline Picoseconds to_ps(double seconds) {
    return static_cast<Picoseconds>(std::llround(seconds * kPsPerSecond));
}

inline double to_seconds(Picoseconds ps) { return static_cast<double>(ps) / kPsPerSecond; }

/// Derives an independent generator for one pipeline component from a run seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Out-of-range parameter, malformed request, or violated precondition.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

/// A correlation function was requested where its normalization vanishes.
class UndefinedCorrelation : public Error {
  public:
    using Error::Error;
};

/// The atom never emits (no drive).
class NoEmission : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Corrupt persisted data; `offset` is the byte (or line) where parsing failed.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

  private:
    std::uint64_t offset_;
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw InvalidInput(message);
}

inline void require_finite(double x, const std::string& name) {
    if (!std::isfinite(x)) throw InvalidInput(name + " must be finite");
}

}  // namespace ionhom
