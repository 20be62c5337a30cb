#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fraclab/core.hpp"

namespace fraclab {

// Closed axis-aligned box in R^n, possibly degenerate (points, segments,
// faces are boxes with zero extent along some axes).
struct Box {
  int n = 2;
  Point lo{};
  Point hi{};

  static Box point(const Point& p, int n) { return Box{n, p, p}; }

  double extent(int axis) const { return hi[axis] - lo[axis]; }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < n; ++i) v *= extent(i);
    return v;
  }

  Point center() const {
    Point c{};
    for (int i = 0; i < n; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
  }

  bool contains(const Point& p) const {
    for (int i = 0; i < n; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }

  // Strict interior membership (for open boxes).
  bool contains_open(const Point& p) const {
    for (int i = 0; i < n; ++i)
      if (p[i] <= lo[i] || p[i] >= hi[i]) return false;
    return true;
  }

  bool intersects(const Box& o) const {
    for (int i = 0; i < n; ++i)
      if (lo[i] > o.hi[i] || o.lo[i] > hi[i]) return false;
    return true;
  }

  bool contains_box(const Box& o) const {
    for (int i = 0; i < n; ++i)
      if (o.lo[i] < lo[i] || o.hi[i] > hi[i]) return false;
    return true;
  }

  Box dilated(double factor) const {
    Box b{n, {}, {}};
    for (int i = 0; i < n; ++i) {
      const double c = 0.5 * (lo[i] + hi[i]);
      const double h = 0.5 * factor * (hi[i] - lo[i]);
      b.lo[i] = c - h;
      b.hi[i] = c + h;
    }
    return b;
  }

  Box expanded(double r) const {
    Box b = *this;
    for (int i = 0; i < n; ++i) {
      b.lo[i] -= r;
      b.hi[i] += r;
    }
    return b;
  }

  bool operator==(const Box& o) const {
    if (n != o.n) return false;
    for (int i = 0; i < n; ++i)
      if (lo[i] != o.lo[i] || hi[i] != o.hi[i]) return false;
    return true;
  }
};

inline double point_box_dist2(const Point& p, const Box& b) {
  double s = 0.0;
  for (int i = 0; i < b.n; ++i) {
    const double g = std::max({0.0, b.lo[i] - p[i], p[i] - b.hi[i]});
    s += g * g;
  }
  return s;
}

inline double box_box_dist2(const Box& a, const Box& b) {
  double s = 0.0;
  for (int i = 0; i < a.n; ++i) {
    const double g = std::max({0.0, a.lo[i] - b.hi[i], b.lo[i] - a.hi[i]});
    s += g * g;
  }
  return s;
}

// Farthest distance from p to a point of b, squared.
inline double point_box_far2(const Point& p, const Box& b) {
  double s = 0.0;
  for (int i = 0; i < b.n; ++i) {
    const double g = std::max(std::abs(p[i] - b.lo[i]), std::abs(p[i] - b.hi[i]));
    s += g * g;
  }
  return s;
}

// Uniform-grid bucket index over a set of closed boxes answering nearest
// distance queries from points and boxes. Queries sweep Chebyshev shells of
// cells outward and stop once the shell lower bound exceeds the best hit.
class BoxIndex {
 public:
  struct Hit {
    double dist2 = std::numeric_limits<double>::infinity();
    std::int64_t index = -1;
  };

  BoxIndex() = default;

  BoxIndex(std::vector<Box> boxes, int n, double cell = 0.0) : n_(n), boxes_(std::move(boxes)) {
    if (boxes_.empty()) return;
    Box bb = boxes_.front();
    for (const auto& b : boxes_)
      for (int i = 0; i < n_; ++i) {
        bb.lo[i] = std::min(bb.lo[i], b.lo[i]);
        bb.hi[i] = std::max(bb.hi[i], b.hi[i]);
      }
    double ext = 0.0;
    for (int i = 0; i < n_; ++i) ext = std::max(ext, bb.extent(i));
    if (ext <= 0.0) ext = 1.0;
    if (cell <= 0.0) {
      const double target = std::max<double>(1.0, std::pow(double(boxes_.size()), 1.0 / n_));
      cell = ext / target;
    }
    cell_ = cell;
    origin_ = bb.lo;
    std::size_t total = 1;
    for (int i = 0; i < kMaxDim; ++i) dims_[i] = 1;
    for (int i = 0; i < n_; ++i) {
      dims_[i] = std::max<std::int64_t>(1, std::int64_t(std::floor(bb.extent(i) / cell_)) + 1);
      total *= std::size_t(dims_[i]);
    }
    std::vector<std::uint32_t> counts(total + 1, 0);
    auto for_cells = [&](const Box& b, auto&& fn) {
      IPoint a{}, z{};
      for (int i = 0; i < n_; ++i) {
        a[i] = clamp_axis(i, std::int64_t(std::floor((b.lo[i] - origin_[i]) / cell_)));
        z[i] = clamp_axis(i, std::int64_t(std::floor((b.hi[i] - origin_[i]) / cell_)));
      }
      for (std::int64_t x = a[0]; x <= z[0]; ++x)
        for (std::int64_t y = (n_ > 1 ? a[1] : 0); y <= (n_ > 1 ? z[1] : 0); ++y)
          for (std::int64_t w = (n_ > 2 ? a[2] : 0); w <= (n_ > 2 ? z[2] : 0); ++w)
            fn(flat({x, y, w}));
    };
    for (const auto& b : boxes_) for_cells(b, [&](std::size_t c) { ++counts[c + 1]; });
    for (std::size_t c = 0; c < total; ++c) counts[c + 1] += counts[c];
    offsets_ = counts;
    members_.resize(offsets_.back());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < boxes_.size(); ++k)
      for_cells(boxes_[k], [&](std::size_t c) { members_[fill[c]++] = std::uint32_t(k); });
  }

  bool empty() const { return boxes_.empty(); }
  std::size_t size() const { return boxes_.size(); }
  const std::vector<Box>& boxes() const { return boxes_; }

  // Nearest box to the query box `q`; `lower_bound` is a known lower bound on
  // the answer's distance which lets the sweep skip inner shells.
  Hit nearest(const Box& q, double lower_bound = 0.0) const {
    Hit best;
    if (boxes_.empty()) return best;
    IPoint a{}, z{};
    for (int i = 0; i < n_; ++i) {
      a[i] = std::int64_t(std::floor((q.lo[i] - origin_[i]) / cell_));
      z[i] = std::int64_t(std::floor((q.hi[i] - origin_[i]) / cell_));
    }
    // Shell k covers cells at Chebyshev index distance k from [a, z]; any
    // box first registered there is at least (k - 1) * cell away.
    std::int64_t kmax = 0;
    for (int i = 0; i < n_; ++i)
      kmax = std::max({kmax, a[i] + 1, dims_[i] - z[i], z[i] + 1, dims_[i] - a[i]});
    std::int64_t k0 = 0;
    if (lower_bound > 0.0) {
      const double sn = std::sqrt(double(n_));
      k0 = std::max<std::int64_t>(0, std::int64_t(std::floor(lower_bound / (cell_ * sn))) - 1);
    }
    for (std::int64_t k = k0; k <= kmax; ++k) {
      if (k >= 1) {
        const double lb = double(k - 1) * cell_;
        if (lb * lb > best.dist2) break;
      }
      visit_shell(a, z, k, [&](std::size_t c) {
        for (std::uint32_t m = offsets_[c]; m < offsets_[c + 1]; ++m) {
          const std::uint32_t id = members_[m];
          const double d2 = box_box_dist2(q, boxes_[id]);
          if (d2 < best.dist2 || (d2 == best.dist2 && std::int64_t(id) < best.index)) {
            best.dist2 = d2;
            best.index = id;
          }
        }
      });
    }
    return best;
  }

  Hit nearest(const Point& p, double lower_bound = 0.0) const {
    return nearest(Box::point(p, n_), lower_bound);
  }

  // Nearest primitive to p where the stored boxes bound the primitives and
  // `exact(id)` gives the true squared distance to primitive id.
  template <typename Exact>
  Hit nearest_with(const Point& p, Exact&& exact) const {
    Hit best;
    if (boxes_.empty()) return best;
    IPoint a{};
    for (int i = 0; i < n_; ++i) a[i] = std::int64_t(std::floor((p[i] - origin_[i]) / cell_));
    std::int64_t kmax = 0;
    for (int i = 0; i < n_; ++i) kmax = std::max({kmax, a[i] + 1, dims_[i] - a[i]});
    for (std::int64_t k = 0; k <= kmax; ++k) {
      if (k >= 1) {
        const double lb = double(k - 1) * cell_;
        if (lb * lb > best.dist2) break;
      }
      visit_shell(a, a, k, [&](std::size_t c) {
        for (std::uint32_t m = offsets_[c]; m < offsets_[c + 1]; ++m) {
          const std::uint32_t id = members_[m];
          if (point_box_dist2(p, boxes_[id]) >= best.dist2) continue;
          const double d2 = exact(std::size_t(id));
          if (d2 < best.dist2) {
            best.dist2 = d2;
            best.index = id;
          }
        }
      });
    }
    return best;
  }

 private:
  std::int64_t clamp_axis(int i, std::int64_t v) const {
    return std::clamp<std::int64_t>(v, 0, dims_[i] - 1);
  }

  std::size_t flat(const IPoint& c) const {
    std::size_t f = 0;
    for (int i = n_ - 1; i >= 0; --i) f = f * std::size_t(dims_[i]) + std::size_t(c[i]);
    return f;
  }

  template <typename Fn>
  void visit_shell(const IPoint& a, const IPoint& z, std::int64_t k, Fn&& fn) const {
    IPoint lo{}, hi{};
    for (int i = 0; i < n_; ++i) {
      lo[i] = a[i] - k;
      hi[i] = z[i] + k;
    }
    auto in_grid = [&](const IPoint& c) {
      for (int i = 0; i < n_; ++i)
        if (c[i] < 0 || c[i] >= dims_[i]) return false;
      return true;
    };
    if (k == 0) {
      IPoint c{};
      IPoint cl{}, ch{};
      for (int i = 0; i < n_; ++i) {
        cl[i] = std::max<std::int64_t>(lo[i], 0);
        ch[i] = std::min<std::int64_t>(hi[i], dims_[i] - 1);
        if (cl[i] > ch[i]) return;
      }
      for (c[0] = cl[0]; c[0] <= ch[0]; ++c[0])
        for (c[1] = (n_ > 1 ? cl[1] : 0); c[1] <= (n_ > 1 ? ch[1] : 0); ++c[1])
          for (c[2] = (n_ > 2 ? cl[2] : 0); c[2] <= (n_ > 2 ? ch[2] : 0); ++c[2]) fn(flat(c));
      return;
    }
    // Faces of the shell: axis d fixed at lo[d] or hi[d]; axes before d are
    // restricted to the open range so shared edges are visited once.
    for (int d = 0; d < n_; ++d) {
      for (int side = 0; side < 2; ++side) {
        const std::int64_t fixed = side == 0 ? lo[d] : hi[d];
        if (fixed < 0 || fixed >= dims_[d]) continue;
        IPoint cl{}, ch{};
        bool empty = false;
        for (int i = 0; i < n_; ++i) {
          if (i == d) {
            cl[i] = ch[i] = fixed;
          } else if (i < d) {
            cl[i] = lo[i] + 1;
            ch[i] = hi[i] - 1;
          } else {
            cl[i] = lo[i];
            ch[i] = hi[i];
          }
          cl[i] = std::max<std::int64_t>(cl[i], 0);
          ch[i] = std::min<std::int64_t>(ch[i], dims_[i] - 1);
          if (cl[i] > ch[i]) empty = true;
        }
        if (empty) continue;
        IPoint c{};
        for (c[0] = cl[0]; c[0] <= ch[0]; ++c[0])
          for (c[1] = (n_ > 1 ? cl[1] : 0); c[1] <= (n_ > 1 ? ch[1] : 0); ++c[1])
            for (c[2] = (n_ > 2 ? cl[2] : 0); c[2] <= (n_ > 2 ? ch[2] : 0); ++c[2])
              if (in_grid(c)) fn(flat(c));
      }
    }
  }

  int n_ = 2;
  std::vector<Box> boxes_;
  double cell_ = 1.0;
  Point origin_{};
  IPoint dims_{1, 1, 1};
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> members_;
};

}  // namespace fraclab
