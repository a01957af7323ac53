#pragma once

#include <algorithm>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

#include "ccmtrack/model.h"

namespace ccmtrack {

/// Tensor-product sample grid over a box, visited in row-major order (the
/// first axis varies slowest).
class Grid {
 public:
  static constexpr std::size_t kDefaultCap = 1'000'000;

  Grid(Box box, std::vector<int> counts, std::size_t cap = kDefaultCap);
  static Grid Uniform(const Box& box, int per_axis,
                      std::size_t cap = kDefaultCap);

  std::size_t size() const { return size_; }
  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  const std::vector<int>& counts() const { return counts_; }

  Vector Point(std::size_t index) const;

 private:
  Box box_;
  std::vector<int> counts_;
  std::size_t size_;
};

/// Per-point evaluation of a scalar margin, with the direction that attains
/// it (may be empty).
struct PointMargin {
  double value;
  Vector direction;
};

/// Values at every grid point plus the point attaining the maximum (lowest
/// index on ties).
struct GridScan {
  std::vector<double> values;
  std::size_t worst_index{0};
  Vector worst_direction;
};

/// Evaluates `fn(x) -> PointMargin` on every grid point, split across
/// `threads` workers (0 = hardware concurrency). The reduction is
/// deterministic regardless of the thread count.
template <typename Fn>
GridScan ScanGrid(const Grid& grid, Fn&& fn, int threads = 0) {
  const std::size_t total = grid.size();
  std::size_t workers =
      threads > 0 ? static_cast<std::size_t>(threads)
                  : std::max(1u, std::thread::hardware_concurrency());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, total / 64));

  GridScan scan;
  scan.values.assign(total, 0.0);
  struct Best {
    double value = -std::numeric_limits<double>::infinity();
    std::size_t index = 0;
    Vector direction;
    bool seen = false;
    std::exception_ptr error;
  };
  std::vector<Best> best(workers);

  auto run = [&](std::size_t w) {
    const std::size_t begin = total * w / workers;
    const std::size_t end = total * (w + 1) / workers;
    try {
      for (std::size_t i = begin; i < end; ++i) {
        PointMargin pm = fn(grid.Point(i));
        scan.values[i] = pm.value;
        if (!best[w].seen || pm.value > best[w].value) {
          best[w].value = pm.value;
          best[w].index = i;
          best[w].direction = std::move(pm.direction);
          best[w].seen = true;
        }
      }
    } catch (...) {
      best[w].error = std::current_exception();
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }

  bool have = false;
  for (auto& b : best) {
    if (b.error) std::rethrow_exception(b.error);
    if (b.seen && (!have || b.value > scan.values[scan.worst_index])) {
      scan.worst_index = b.index;
      scan.worst_direction = b.direction;
      have = true;
    }
  }
  return scan;
}

}  // namespace ccmtrack
