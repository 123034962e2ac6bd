#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace evb {

/// Reads a whole file. Throws ParseError(kIo) when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp.<pid>" then renames over `path`. The optional hook
/// runs between the two steps (used for fault injection in tests).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents,
                       const std::function<void()>& before_rename = {});

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Deterministic RNG used wherever a seed appears in an interface.
/// mt19937_64 is fully specified by the standard; the distribution helpers
/// below are written out so results do not depend on the standard library.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform double in [0, 1).
  double uniform01();
  /// Standard normal (Box-Muller).
  double normal();

  /// First k positions of a Fisher-Yates shuffle of [0, n), sorted ascending.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. threads <= 1 runs inline. Callers write results by index, so the
/// outcome does not depend on the thread count.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace evb
