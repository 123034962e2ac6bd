#include "evb/kdtree.hpp"

#include <algorithm>
#include <limits>

#include "evb/error.hpp"

namespace evb {

KdTree3::KdTree3(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (points.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("k-d tree supports fewer than 2^32 points");
  }
  order_.resize(points.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!order_.empty()) {
    nodes_.reserve(2 * (points.size() / leaf_size_ + 1));
    build(0, static_cast<std::uint32_t>(order_.size()));
  }
  sorted_.reserve(order_.size());
  for (auto i : order_) sorted_.push_back(points_[i]);
}

std::int32_t KdTree3::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (std::uint32_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  int axis;
  (node.hi - node.lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree3::box_dist_sq(const Node& n, const Vec3& q) {
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    double e = 0.0;
    if (q[k] < n.lo[k]) {
      e = n.lo[k] - q[k];
    } else if (q[k] > n.hi[k]) {
      e = q[k] - n.hi[k];
    }
    d += e * e;
  }
  return d;
}

namespace {

bool closer(const KdTree3::Neighbor& a, const KdTree3::Neighbor& b) {
  return a.dist_sq < b.dist_sq || (a.dist_sq == b.dist_sq && a.index < b.index);
}

}  // namespace

void KdTree3::nearest_rec(std::int32_t id, const Vec3& q, Neighbor& best) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const double d = (sorted_[i] - q).squaredNorm();
      if (d < best.dist_sq || (d == best.dist_sq && order_[i] < best.index)) {
        best = {order_[i], d};
      }
    }
    return;
  }
  const bool go_left = q[n.axis] < n.split;
  const std::int32_t near = go_left ? n.left : n.right;
  const std::int32_t far = go_left ? n.right : n.left;
  if (box_dist_sq(nodes_[near], q) <= best.dist_sq) nearest_rec(near, q, best);
  if (box_dist_sq(nodes_[far], q) <= best.dist_sq) nearest_rec(far, q, best);
}

KdTree3::Neighbor KdTree3::nearest(const Vec3& q) const {
  Neighbor best{static_cast<std::size_t>(-1), std::numeric_limits<double>::infinity()};
  if (!nodes_.empty()) nearest_rec(0, q, best);
  return best;
}

std::vector<KdTree3::Neighbor> KdTree3::knn(const Vec3& q, std::size_t k,
                                            std::size_t exclude) const {
  std::vector<Neighbor> best;  // max-heap on `closer`
  if (nodes_.empty() || k == 0) return best;
  best.reserve(k + 1);

  auto worst = [&] {
    return best.size() < k ? std::numeric_limits<double>::infinity() : best.front().dist_sq;
  };

  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    // A box at exactly the current worst distance may still hold a tie with
    // a smaller index, so only strictly farther boxes are pruned.
    if (box_dist_sq(n, q) > worst()) continue;
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const Neighbor cand{idx, (sorted_[i] - q).squaredNorm()};
        if (best.size() < k) {
          best.push_back(cand);
          std::push_heap(best.begin(), best.end(), closer);
        } else if (closer(cand, best.front())) {
          std::pop_heap(best.begin(), best.end(), closer);
          best.back() = cand;
          std::push_heap(best.begin(), best.end(), closer);
        }
      }
      continue;
    }
    const bool go_left = q[n.axis] < n.split;
    // Push the far child first so the near child is explored first.
    stack.push_back(go_left ? n.right : n.left);
    stack.push_back(go_left ? n.left : n.right);
  }
  std::sort_heap(best.begin(), best.end(), closer);
  return best;
}

}  // namespace evb
