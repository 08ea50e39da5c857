#ifndef LEGFOL_SAMPLING_HPP_
#define LEGFOL_SAMPLING_HPP_

// Sample sets, regular grids, a seeded generator and a small parallel loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <thread>
#include <vector>

#include "legfol/fields.hpp"

namespace legfol {

/// Seeded 64-bit generator; doubles are built from the top 53 bits so the
/// stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct Box {
  Vec lo, hi;

  static Box cube(int dim, double half) { return {Vec::Constant(dim, -half), Vec::Constant(dim, half)}; }
  int dim() const { return static_cast<int>(lo.size()); }
};

inline std::vector<Vec> uniform_samples(const Box& box, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    Vec p(box.dim());
    for (int i = 0; i < box.dim(); ++i) p[i] = rng.uniform(box.lo[i], box.hi[i]);
    out.push_back(std::move(p));
  }
  return out;
}

/// Regular grid lo + i*step in every coordinate.
struct Grid {
  Box box;
  double step = 0.1;

  std::vector<int> counts() const {
    std::vector<int> c;
    for (int i = 0; i < box.dim(); ++i)
      c.push_back(static_cast<int>(std::floor((box.hi[i] - box.lo[i]) / step + 1e-9)) + 1);
    return c;
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (int c : counts()) n *= static_cast<std::size_t>(std::max(c, 0));
    return n;
  }

  Vec point(const std::vector<int>& idx) const {
    Vec p(box.dim());
    for (int i = 0; i < box.dim(); ++i) {
      double v = box.lo[i] + idx[static_cast<std::size_t>(i)] * step;
      // Snap rounding noise so grid nodes on coordinate planes are exact zeros.
      if (std::abs(v) < 1e-12 * step) v = 0.0;
      p[i] = v;
    }
    return p;
  }

  /// Multi-index of the linear position `k` (last coordinate fastest).
  std::vector<int> unflatten(std::size_t k) const {
    auto c = counts();
    std::vector<int> idx(c.size());
    for (std::size_t i = c.size(); i-- > 0;) {
      idx[i] = static_cast<int>(k % static_cast<std::size_t>(c[i]));
      k /= static_cast<std::size_t>(c[i]);
    }
    return idx;
  }

  std::vector<Vec> points() const {
    std::vector<Vec> out;
    out.reserve(size());
    for (std::size_t k = 0; k < size(); ++k) out.push_back(point(unflatten(k)));
    return out;
  }
};

/// Worker count from LEGFOL_THREADS (default 1).
inline int thread_count() {
  if (const char* env = std::getenv("LEGFOL_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return std::min(n, 256);
  }
  return 1;
}

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write to per-index slots so results do not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  int workers = thread_count();
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    std::size_t begin = static_cast<std::size_t>(w) * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, &err = errors[static_cast<std::size_t>(w)], begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  // The lowest failing chunk wins, as in a sequential loop.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace legfol

#endif  // LEGFOL_SAMPLING_HPP_
