#include <atomic>
#include <cstdlib>
#include <string>

#include "citysim/kernels.hpp"

namespace citysim::kernels {

void BoxSoA::clear() {
  min_x.clear();
  min_y.clear();
  max_x.clear();
  max_y.clear();
}

void BoxSoA::reserve(std::size_t n) {
  min_x.reserve(n);
  min_y.reserve(n);
  max_x.reserve(n);
  max_y.reserve(n);
}

void BoxSoA::push(const Aabb& b) {
  min_x.push_back(b.min.x);
  min_y.push_back(b.min.y);
  max_x.push_back(b.max.x);
  max_y.push_back(b.max.y);
}

void DiscSoA::clear() {
  cx.clear();
  cy.clear();
  r.clear();
}

void DiscSoA::reserve(std::size_t n) {
  cx.reserve(n);
  cy.reserve(n);
  r.reserve(n);
}

void DiscSoA::push(Vec2 c, double radius) {
  cx.push_back(c.x);
  cy.push_back(c.y);
  r.push_back(radius);
}

namespace {

const KernelSet* find(std::string_view name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") return avx2_kernels();
  if (name == "neon") return neon_kernels();
  return nullptr;
}

const KernelSet* best_available() {
  if (const char* env = std::getenv("CITYSIM_KERNELS")) {
    if (const KernelSet* forced = find(env)) return forced;
  }
  if (const KernelSet* k = avx2_kernels()) return k;
  if (const KernelSet* k = neon_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> cur{best_available()};
  return cur;
}

}  // namespace

const KernelSet& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelSet* k = find(name);
  if (k == nullptr) return false;
  current().store(k, std::memory_order_relaxed);
  return true;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> out{"scalar"};
  if (avx2_kernels() != nullptr) out.push_back("avx2");
  if (neon_kernels() != nullptr) out.push_back("neon");
  return out;
}

}  // namespace citysim::kernels
