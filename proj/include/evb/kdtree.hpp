#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "evb/so3.hpp"

namespace evb {

/// Exact 3-D k-d tree over a borrowed point array. Queries return indices
/// into that array; ties in distance resolve to the smaller index, so results
/// match a brute-force scan ordered by (squared distance, index).
class KdTree3 {
 public:
  struct Neighbor {
    std::size_t index;
    double dist_sq;
  };

  explicit KdTree3(std::span<const Vec3> points, std::size_t leaf_size = 16);

  std::size_t size() const { return points_.size(); }

  /// Nearest point; undefined for an empty tree (check size() first).
  Neighbor nearest(const Vec3& q) const;

  /// Up to k nearest, sorted by (dist_sq, index). `exclude` (if < size())
  /// is skipped, which lets a point query its neighbors without itself.
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_ (leaves only)
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
    Vec3 lo, hi;  // bounding box
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  static double box_dist_sq(const Node& n, const Vec3& q);
  void nearest_rec(std::int32_t node, const Vec3& q, Neighbor& best) const;

  std::span<const Vec3> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Vec3> sorted_;  // points_ permuted by order_, for locality
  std::vector<Node> nodes_;
};

}  // namespace evb
