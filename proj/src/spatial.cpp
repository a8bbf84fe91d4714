#include "profuse/spatial.hpp"

#include <algorithm>

namespace profuse {

namespace {

constexpr std::uint32_t kLeafSize = 12;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance_sq != b.distance_sq ? a.distance_sq < b.distance_sq : a.index < b.index;
}

}  // namespace

KdTree::KdTree(std::span<const Eigen::Vector3d> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa != pb ? pa < pb : a < b;
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Eigen::Vector3d& q, int k, std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t first = diff < 0.0 ? node.left : node.right;
  const std::int32_t second = diff < 0.0 ? node.right : node.left;
  search(first, q, k, heap);
  // Points equal to the split value may sit on either side, hence <=.
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().distance_sq) search(second, q, k, heap);
}

std::vector<Neighbor> KdTree::nearest(const Eigen::Vector3d& query, int k) const {
  std::vector<Neighbor> heap;
  if (points_.empty() || k <= 0) return heap;
  heap.reserve(static_cast<std::size_t>(k));
  search(0, query, k, heap);
  std::sort(heap.begin(), heap.end(), closer);
  return heap;
}

}  // namespace profuse
