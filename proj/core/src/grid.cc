#include "ccmtrack/grid.h"

#include <stdexcept>

namespace ccmtrack {

Grid::Grid(Box box, std::vector<int> counts, std::size_t cap)
    : box_(std::move(box)), counts_(std::move(counts)), size_(1) {
  if (static_cast<int>(counts_.size()) != box_.dim()) {
    throw std::invalid_argument("Grid: one sample count per axis required");
  }
  for (int c : counts_) {
    if (c < 2) throw std::invalid_argument("Grid: at least 2 samples per axis");
    if (size_ > cap / static_cast<std::size_t>(c)) {
      throw std::invalid_argument("Grid: point count exceeds cap of " +
                                  std::to_string(cap));
    }
    size_ *= static_cast<std::size_t>(c);
  }
}

Grid Grid::Uniform(const Box& box, int per_axis, std::size_t cap) {
  return Grid(box, std::vector<int>(box.dim(), per_axis), cap);
}

Vector Grid::Point(std::size_t index) const {
  const int n = dim();
  Vector p(n);
  for (int axis = n - 1; axis >= 0; --axis) {
    const auto c = static_cast<std::size_t>(counts_[axis]);
    const std::size_t k = index % c;
    index /= c;
    if (k == c - 1) {
      p(axis) = box_.hi(axis);
    } else {
      p(axis) = box_.lo(axis) + (box_.hi(axis) - box_.lo(axis)) *
                                    static_cast<double>(k) /
                                    static_cast<double>(c - 1);
    }
  }
  return p;
}

}  // namespace ccmtrack
