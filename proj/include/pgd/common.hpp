#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace pgd {

using Index = std::int32_t;

// Input files that cannot be parsed or violate the dataset invariants.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Split generation failures (empty partitions, bad fractions).
class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or argument mismatch between cooperating objects.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values met during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PGD_REQUIRE(cond, msg)                          \
  do {                                                  \
    if (!(cond)) throw ::pgd::ContractError(msg);       \
  } while (0)

using Rng = std::mt19937_64;

// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Worker count for row-parallel kernels, read from PGD_THREADS (default:
// hardware concurrency). Always at least 1.
std::size_t thread_count();

// Runs body(begin, end) over contiguous chunks of [0, n). With one worker
// the body runs inline on the calling thread.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

// printf-style formatting into std::string.
std::string strprintf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace pgd
