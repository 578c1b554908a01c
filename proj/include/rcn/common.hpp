#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rcn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class for all library errors.  `stage()` names the pipeline stage
/// that raised it (empty when raised outside a pipeline run).
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what, std::string stage = {})
      : std::runtime_error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }
  /// Sets the stage unless one is already recorded.
  void tag(const std::string& stage) {
    if (stage_.empty()) stage_ = stage;
  }

private:
  std::string stage_;
};

/// A computation produced a non-finite value or left its admissible region.
/// `step()` is the time index at which it happened.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// Thrown when an argument violates a documented precondition.
class PreconditionError : public Error {
public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named stage: mix64(global ^ fnv1a(stage)).  Every stochastic
/// stage of a run draws from its own stream derived this way.
constexpr std::uint64_t derive_seed(std::uint64_t global, std::string_view stage) noexcept {
  return mix64(global ^ fnv1a(stage));
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PreconditionError(msg);
}

}  // namespace rcn
