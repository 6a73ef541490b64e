#include "citysim/quadtree.hpp"

namespace citysim {

QuadTree::QuadTree(const Aabb& region, int capacity, int max_depth)
    : capacity_(capacity < 1 ? 1 : capacity), max_depth_(max_depth < 0 ? 0 : max_depth) {
  nodes_.push_back(Node{region, 0, -1, {}});
}

void QuadTree::clear() {
  const Aabb root = region();
  nodes_.clear();
  nodes_.push_back(Node{root, 0, -1, {}});
  outside_.clear();
  count_ = 0;
}

int QuadTree::child_for(const Node& node, const Aabb& box) const {
  for (int k = 0; k < 4; ++k) {
    if (nodes_[node.first_child + k].region.contains(box)) return node.first_child + k;
  }
  return -1;
}

void QuadTree::split(int index) {
  const Aabb r = nodes_[index].region;
  const Vec2 c = r.center();
  const int depth = nodes_[index].depth + 1;
  const int first = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{{r.min.x, r.min.y}, {c.x, c.y}}, depth, -1, {}});
  nodes_.push_back(Node{{{c.x, r.min.y}, {r.max.x, c.y}}, depth, -1, {}});
  nodes_.push_back(Node{{{r.min.x, c.y}, {c.x, r.max.y}}, depth, -1, {}});
  nodes_.push_back(Node{{{c.x, c.y}, {r.max.x, r.max.y}}, depth, -1, {}});
  nodes_[index].first_child = first;

  std::vector<Entry> keep;
  std::vector<Entry> moved = std::move(nodes_[index].entries);
  for (const Entry& e : moved) {
    const int child = child_for(nodes_[index], e.box);
    if (child < 0) {
      keep.push_back(e);
    } else {
      nodes_[child].entries.push_back(e);
    }
  }
  nodes_[index].entries = std::move(keep);
}

void QuadTree::insert(std::uint32_t id, const Aabb& box) {
  ++count_;
  if (!box.intersects(region())) {
    outside_.push_back({id, box});
    return;
  }
  int index = 0;
  for (;;) {
    Node& node = nodes_[index];
    if (node.first_child < 0) {
      node.entries.push_back({id, box});
      if (static_cast<int>(node.entries.size()) > capacity_ && node.depth < max_depth_) split(index);
      return;
    }
    const int child = child_for(node, box);
    if (child < 0) {
      node.entries.push_back({id, box});
      return;
    }
    index = child;
  }
}

template <class Visit>
void QuadTree::visit(const Aabb& window, Visit&& fn) const {
  for (const Entry& e : outside_) {
    if (e.box.intersects(window) && fn(e)) return;
  }
  // Root entries may poke out of the root region, so they are always tested.
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int index = stack.back();
    stack.pop_back();
    const Node& node = nodes_[index];
    for (const Entry& e : node.entries) {
      if (e.box.intersects(window) && fn(e)) return;
    }
    if (node.first_child < 0) continue;
    for (int k = 3; k >= 0; --k) {
      if (nodes_[node.first_child + k].region.intersects(window)) stack.push_back(node.first_child + k);
    }
  }
}

void QuadTree::query(const Aabb& window, std::vector<std::uint32_t>& out) const {
  visit(window, [&](const Entry& e) {
    out.push_back(e.id);
    return false;
  });
}

std::vector<std::uint32_t> QuadTree::query(const Aabb& window) const {
  std::vector<std::uint32_t> out;
  query(window, out);
  return out;
}

bool QuadTree::any_overlap(const Aabb& box) const {
  bool found = false;
  visit(box, [&](const Entry& e) {
    found = e.box.overlaps(box);
    return found;
  });
  return found;
}

}  // namespace citysim
