#pragma once

#include <cstdint>
#include <vector>

#include "citysim/geometry.hpp"

namespace citysim {

/// Region quadtree over axis-aligned boxes. An entry lives at the deepest
/// node whose region fully contains it; entries that straddle a split line
/// stay at the parent. Boxes outside the root region are kept in a side list
/// so that queries stay exact for any input.
class QuadTree {
 public:
  struct Entry {
    std::uint32_t id;
    Aabb box;
  };

  QuadTree() : QuadTree(Aabb{{0, 0}, {1, 1}}) {}
  explicit QuadTree(const Aabb& region, int capacity = 8, int max_depth = 10);

  void insert(std::uint32_t id, const Aabb& box);
  void clear();

  /// Ids of all entries whose boxes intersect `window` (closed test).
  std::vector<std::uint32_t> query(const Aabb& window) const;
  /// Appending variant for hot loops.
  void query(const Aabb& window, std::vector<std::uint32_t>& out) const;

  /// True if some entry's box has a positive-area overlap with `box`.
  bool any_overlap(const Aabb& box) const;

  std::size_t size() const { return count_; }
  const Aabb& region() const { return nodes_.front().region; }
  int capacity() const { return capacity_; }
  int max_depth() const { return max_depth_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Aabb region;
    int depth = 0;
    int first_child = -1;  // four consecutive nodes: SW, SE, NW, NE
    std::vector<Entry> entries;
  };

  int child_for(const Node& node, const Aabb& box) const;
  void split(int node);
  template <class Visit>
  void visit(const Aabb& window, Visit&& fn) const;

  std::vector<Node> nodes_;
  std::vector<Entry> outside_;
  int capacity_;
  int max_depth_;
  std::size_t count_ = 0;
};

}  // namespace citysim
