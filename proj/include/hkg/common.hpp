#pragma once
// Shared numeric types, error type, seeding and a small deterministic
// parallel-for used by every stage of the knowledge-graph pipeline.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hkg {

/// Row-major sparse table; rows are records, columns are features.
template <typename Scalar>
using SparseRows = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

using FeatureTable = SparseRows<double>;
/// Binary labels stored as 0.0 / 1.0.
using Labels = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of stage `stage` under the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t index = 0) {
  return mix_seed(mix_seed(seed ^ mix_seed(stage)) ^ index);
}

inline std::uint64_t hash_string(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Uniform integer in [lo, hi].
inline long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// output is independent of the thread count. The first exception thrown by
/// any worker is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(threads, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Selects rows of a sparse table.
template <typename Scalar>
SparseRows<Scalar> select_rows(const SparseRows<Scalar>& table, const std::vector<std::size_t>& rows) {
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(rows.size() * 4);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (typename SparseRows<Scalar>::InnerIterator it(table, static_cast<Eigen::Index>(rows[r])); it; ++it) {
      triplets.emplace_back(static_cast<Eigen::Index>(r), it.col(), it.value());
    }
  }
  SparseRows<Scalar> out(static_cast<Eigen::Index>(rows.size()), table.cols());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

/// Dense 0/1 column `col` of a sparse table.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> column_of(const SparseRows<Scalar>& table, Eigen::Index col) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(table.rows());
  for (Eigen::Index r = 0; r < table.outerSize(); ++r) {
    for (typename SparseRows<Scalar>::InnerIterator it(table, r); it; ++it) {
      if (it.col() == col) out(r) = it.value();
    }
  }
  return out;
}

/// Horizontal concatenation [left | right] of two sparse tables.
template <typename Scalar>
SparseRows<Scalar> hstack(const SparseRows<Scalar>& left, const SparseRows<Scalar>& right) {
  if (left.rows() != right.rows()) throw Error("hstack: row count mismatch");
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(static_cast<std::size_t>(left.nonZeros() + right.nonZeros()));
  for (Eigen::Index r = 0; r < left.outerSize(); ++r) {
    for (typename SparseRows<Scalar>::InnerIterator it(left, r); it; ++it) triplets.emplace_back(r, it.col(), it.value());
    for (typename SparseRows<Scalar>::InnerIterator it(right, r); it; ++it)
      triplets.emplace_back(r, left.cols() + it.col(), it.value());
  }
  SparseRows<Scalar> out(left.rows(), left.cols() + right.cols());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

}  // namespace hkg
