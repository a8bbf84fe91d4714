#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace profuse {

struct Neighbor {
  std::uint32_t index = 0;
  double distance_sq = 0.0;
};

/// Static 3D k-d tree for exact k-nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  /// Up to k nearest points ordered by (distance, index).
  std::vector<Neighbor> nearest(const Eigen::Vector3d& query, int k) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Eigen::Vector3d& q, int k, std::vector<Neighbor>& heap) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace profuse
