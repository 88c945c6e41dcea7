#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vipeeg {

inline constexpr int kNumClasses = 6;

// Fixed class order used for labels, predictions and reports.
enum class ClassId : int { Seizure = 0, LPD = 1, GPD = 2, LRDA = 3, GRDA = 4, Other = 5 };

std::string_view class_name(ClassId c);
// Lower-case key used in CSV headers and file names ("seizure", "lpd", ...).
std::string_view class_key(ClassId c);
inline ClassId class_from_index(int i) { return static_cast<ClassId>(i); }
inline int index_of(ClassId c) { return static_cast<int>(c); }

using ClassVector = std::array<double, kNumClasses>;

// Malformed or inconsistent input data (files, manifests, signals).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during training or evaluation (NaN loss, divergence).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent RNG streams from
// (seed, index...) tuples so results do not depend on processing order.
std::uint64_t mix64(std::uint64_t x);

template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t seed, Ts... parts) {
  std::uint64_t h = mix64(seed);
  ((h = mix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

std::uint64_t hash_string(std::string_view s);

// Uniform double in [0, 1) built from 53 random bits. Unlike
// std::uniform_real_distribution the result is fixed across standard libraries.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
// Uniform integer in [lo, hi] (inclusive).
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
double normal(Rng& rng);
// Fisher-Yates shuffle driven by uniform_int.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
// processed exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace vipeeg
