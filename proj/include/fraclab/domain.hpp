#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fraclab/box.hpp"
#include "fraclab/core.hpp"
#include "fraclab/dyadic.hpp"

namespace fraclab {

// A bounded open domain G as seen by the Whitney construction and the
// clearance-based algorithms: membership, distance to the boundary, and a
// local truncation scale.
class DomainModel {
 public:
  virtual ~DomainModel() = default;

  virtual int dim() const = 0;
  virtual Box bounds() const = 0;
  // Lebesgue measure of G.
  virtual double measure() const = 0;
  // Designated center point (Whitney root selection, John center).
  virtual Point center() const = 0;
  virtual bool contains(const Point& x) const = 0;
  // dist(x, dG) for x in G, 0 otherwise.
  virtual double clearance(const Point& x) const = 0;
  // Squared distance from the closed box to dG when the box lies in G,
  // 0 when it touches the complement.
  virtual double box_clearance2(const Box& b) const = 0;
  // True when the open box meets G.
  virtual bool meets(const Box& b) const = 0;
  // Finest Whitney generation kept for a cube inside `b`, given the
  // caller's global cap.
  virtual int truncation_generation(const Box& b, int j_max) const {
    (void)b;
    return j_max;
  }
  // Nearest boundary point to x (for x in G).
  virtual Point nearest_boundary_point(const Point& x) const = 0;
};

// Voxel occupancy domain at resolution 2^-J. The boundary is the union of
// faces between occupied and unoccupied voxels; everything outside the
// stored grid is unoccupied (the grid always carries one padding layer).
class VoxelDomain : public DomainModel {
 public:
  VoxelDomain() = default;

  // `origin` is the global voxel index of occupancy cell 0; `dims` its
  // extent. Layout is x-fastest. Throws on empty or disconnected input.
  VoxelDomain(int n, int J, const IPoint& origin, const IPoint& dims,
              const std::vector<std::uint8_t>& occupancy)
      : n_(n), J_(J) {
    if (n != 2 && n != 3) fail("bad-dimension", "dimension must be 2 or 3, got ", n);
    h_ = std::ldexp(1.0, -J);
    for (int i = 0; i < kMaxDim; ++i) {
      org_[i] = i < n ? origin[i] - 1 : 0;
      dims_[i] = i < n ? dims[i] + 2 : 1;
    }
    std::size_t total = 1;
    for (int i = 0; i < n_; ++i) total *= std::size_t(dims_[i]);
    occ_.assign(total, 0);
    std::size_t expect = 1;
    for (int i = 0; i < n_; ++i) expect *= std::size_t(dims[i]);
    if (occupancy.size() != expect) fail("bad-occupancy", "occupancy size ", occupancy.size(), " != ", expect);
    IPoint c{};
    for (std::size_t f = 0; f < expect; ++f) {
      std::size_t r = f;
      for (int i = 0; i < n_; ++i) {
        c[i] = std::int64_t(r % std::size_t(dims[i])) + 1;
        r /= std::size_t(dims[i]);
      }
      occ_[local_flat(c)] = occupancy[f] ? 1 : 0;
    }
    finalize();
  }

  int dim() const override { return n_; }
  int resolution() const { return J_; }
  double pitch() const { return h_; }
  const IPoint& grid_origin() const { return org_; }
  const IPoint& grid_dims() const { return dims_; }
  std::size_t grid_size() const { return occ_.size(); }
  std::size_t occupied_count() const { return occupied_.size(); }
  // Local flat indices of occupied voxels, in increasing order.
  const std::vector<std::size_t>& occupied() const { return occupied_; }
  bool occupied_local(std::size_t flat) const { return occ_[flat] != 0; }

  bool has_distance() const { return !dist_.empty(); }
  // Exact distance from each occupied voxel center to dG (0 elsewhere).
  const std::vector<double>& dist_field() const { return dist_; }
  double voxel_distance(std::size_t flat) const { return dist_.empty() ? 0.0 : dist_[flat]; }

  IPoint local_coords(std::size_t flat) const {
    IPoint c{};
    for (int i = 0; i < n_; ++i) {
      c[i] = std::int64_t(flat % std::size_t(dims_[i]));
      flat /= std::size_t(dims_[i]);
    }
    return c;
  }
  std::size_t local_flat(const IPoint& c) const {
    std::size_t f = 0;
    for (int i = n_ - 1; i >= 0; --i) f = f * std::size_t(dims_[i]) + std::size_t(c[i]);
    return f;
  }
  Point voxel_center(std::size_t flat) const {
    const IPoint c = local_coords(flat);
    Point p{};
    for (int i = 0; i < n_; ++i) p[i] = (double(c[i] + org_[i]) + 0.5) * h_;
    return p;
  }
  Box voxel_box(std::size_t flat) const {
    const IPoint c = local_coords(flat);
    Box b{n_, {}, {}};
    for (int i = 0; i < n_; ++i) {
      b.lo[i] = double(c[i] + org_[i]) * h_;
      b.hi[i] = double(c[i] + org_[i] + 1) * h_;
    }
    return b;
  }
  // Local flat index of the voxel containing x, if inside the grid.
  std::optional<std::size_t> locate(const Point& x) const {
    IPoint c{};
    for (int i = 0; i < n_; ++i) {
      c[i] = std::int64_t(std::floor(x[i] / h_)) - org_[i];
      if (c[i] < 0 || c[i] >= dims_[i]) return std::nullopt;
    }
    return local_flat(c);
  }

  Box bounds() const override {
    Box b{n_, {}, {}};
    for (int i = 0; i < n_; ++i) {
      b.lo[i] = double(org_[i] + 1) * h_;
      b.hi[i] = double(org_[i] + dims_[i] - 1) * h_;
    }
    return b;
  }
  double measure() const override { return double(occupied_.size()) * std::pow(h_, n_); }
  Point center() const override { return center_; }
  void set_center(const Point& c) {
    if (!contains(c)) fail("center-outside", "designated center lies outside the domain");
    center_ = c;
  }

  bool contains(const Point& x) const override {
    auto f = locate(x);
    return f && occ_[*f];
  }

  double clearance(const Point& x) const override {
    auto f = locate(x);
    if (!f || !occ_[*f]) return 0.0;
    double lb = 0.0;
    if (!dist_.empty()) lb = std::max(0.0, dist_[*f] - 0.5 * h_ * std::sqrt(double(n_)));
    return std::sqrt(boundary_.nearest(x, lb).dist2);
  }

  double box_clearance2(const Box& b) const override {
    if (!contains(b.center())) return 0.0;
    return boundary_.nearest(b).dist2;
  }

  bool meets(const Box& b) const override {
    IPoint a{}, z{};
    for (int i = 0; i < n_; ++i) {
      a[i] = std::int64_t(std::floor(b.lo[i] / h_)) - org_[i];
      z[i] = std::int64_t(std::ceil(b.hi[i] / h_)) - org_[i];  // exclusive
      if (b.hi[i] <= b.lo[i]) return false;
      a[i] = std::clamp<std::int64_t>(a[i], 0, dims_[i]);
      z[i] = std::clamp<std::int64_t>(z[i], 0, dims_[i]);
      if (a[i] >= z[i]) return false;
    }
    return occupied_in(a, z) > 0;
  }

  Point nearest_boundary_point(const Point& x) const override {
    const auto hit = boundary_.nearest(x);
    const Box& b = boundary_.boxes()[std::size_t(hit.index)];
    Point p{};
    for (int i = 0; i < n_; ++i) p[i] = std::clamp(x[i], b.lo[i], b.hi[i]);
    return p;
  }

  // Number of occupied voxels in the local index range [a, z).
  std::int64_t occupied_in(const IPoint& a, const IPoint& z) const {
    auto P = [&](std::int64_t x, std::int64_t y, std::int64_t w) -> std::int64_t {
      return prefix_[std::size_t(x) + std::size_t(dims_[0] + 1) *
                                           (std::size_t(y) + std::size_t(dims_[1] + 1) * std::size_t(w))];
    };
    if (n_ == 2) return P(z[0], z[1], 1) - P(a[0], z[1], 1) - P(z[0], a[1], 1) + P(a[0], a[1], 1);
    return P(z[0], z[1], z[2]) - P(a[0], z[1], z[2]) - P(z[0], a[1], z[2]) - P(z[0], z[1], a[2]) +
           P(a[0], a[1], z[2]) + P(a[0], z[1], a[2]) + P(z[0], a[1], a[2]) - P(a[0], a[1], a[2]);
  }

  // Unoccupied voxels sharing a face with an occupied voxel; their closed
  // union contains dG.
  const BoxIndex& boundary_index() const { return boundary_; }

  // Boundary faces as degenerate boxes (used by porosity sampling and the
  // brute-force distance oracle).
  std::vector<Box> boundary_faces() const {
    std::vector<Box> faces;
    for (std::size_t f : occupied_) {
      const IPoint c = local_coords(f);
      for (int a = 0; a < n_; ++a)
        for (int s = -1; s <= 1; s += 2) {
          IPoint d = c;
          d[a] += s;
          if (occ_[local_flat(d)]) continue;
          Box b = voxel_box(f);
          if (s < 0)
            b.hi[a] = b.lo[a];
          else
            b.lo[a] = b.hi[a];
          faces.push_back(b);
        }
    }
    return faces;
  }

  VoxelDomain with_distance(std::vector<double> dist) const {
    VoxelDomain d = *this;
    d.dist_ = std::move(dist);
    return d;
  }

 private:
  void finalize() {
    occupied_.clear();
    for (std::size_t f = 0; f < occ_.size(); ++f)
      if (occ_[f]) occupied_.push_back(f);
    if (occupied_.empty()) fail("empty-domain", "occupancy is empty");
    check_connected();
    build_prefix();
    std::vector<Box> layer;
    for (std::size_t f = 0; f < occ_.size(); ++f) {
      if (occ_[f]) continue;
      const IPoint c = local_coords(f);
      bool touches = false;
      for (int a = 0; a < n_ && !touches; ++a)
        for (int s = -1; s <= 1 && !touches; s += 2) {
          IPoint d = c;
          d[a] += s;
          if (d[a] < 0 || d[a] >= dims_[a]) continue;
          touches = occ_[local_flat(d)] != 0;
        }
      if (touches) layer.push_back(voxel_box(f));
    }
    boundary_ = BoxIndex(std::move(layer), n_);
    Point c{};
    for (std::size_t f : occupied_) {
      const Point p = voxel_center(f);
      for (int i = 0; i < n_; ++i) c[i] += p[i];
    }
    for (int i = 0; i < n_; ++i) c[i] /= double(occupied_.size());
    if (contains(c)) {
      center_ = c;
    } else {
      // Nonconvex shapes: fall back to the occupied voxel center nearest
      // the centroid.
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t f : occupied_) {
        const double d = dist2(voxel_center(f), c, n_);
        if (d < best) {
          best = d;
          center_ = voxel_center(f);
        }
      }
    }
  }

  void check_connected() const {
    std::vector<std::uint8_t> seen(occ_.size(), 0);
    std::deque<std::size_t> queue{occupied_.front()};
    seen[occupied_.front()] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
      const std::size_t f = queue.front();
      queue.pop_front();
      const IPoint c = local_coords(f);
      for (int a = 0; a < n_; ++a)
        for (int s = -1; s <= 1; s += 2) {
          IPoint d = c;
          d[a] += s;
          const std::size_t g = local_flat(d);
          if (occ_[g] && !seen[g]) {
            seen[g] = 1;
            ++reached;
            queue.push_back(g);
          }
        }
    }
    if (reached == occupied_.size()) return;
    for (std::size_t f : occupied_)
      if (!seen[f]) {
        const IPoint a = local_coords(occupied_.front());
        const IPoint b = local_coords(f);
        std::ostringstream oss;
        oss << "occupancy is disconnected; witness voxels";
        for (const IPoint* w : {&a, &b}) {
          oss << " (";
          for (int i = 0; i < n_; ++i) oss << (i ? "," : "") << (*w)[i] + org_[i];
          oss << ")";
        }
        throw Error("disconnected", oss.str());
      }
  }

  void build_prefix() {
    const std::size_t sx = std::size_t(dims_[0] + 1), sy = std::size_t(dims_[1] + 1);
    const std::size_t sz = n_ > 2 ? std::size_t(dims_[2] + 1) : 2;
    prefix_.assign(sx * sy * sz, 0);
    auto at = [&](std::size_t x, std::size_t y, std::size_t w) -> std::int64_t& {
      return prefix_[x + sx * (y + sy * w)];
    };
    const std::size_t wz = n_ > 2 ? std::size_t(dims_[2]) : 1;
    for (std::size_t w = 1; w <= wz; ++w)
      for (std::size_t y = 1; y < sy; ++y)
        for (std::size_t x = 1; x < sx; ++x) {
          IPoint c{std::int64_t(x - 1), std::int64_t(y - 1), std::int64_t(w - 1)};
          const std::int64_t v = occ_[local_flat(c)];
          at(x, y, w) = v + at(x - 1, y, w) + at(x, y - 1, w) + at(x, y, w - 1) - at(x - 1, y - 1, w) -
                        at(x - 1, y, w - 1) - at(x, y - 1, w - 1) + at(x - 1, y - 1, w - 1);
        }
  }

  int n_ = 2;
  int J_ = 0;
  double h_ = 1.0;
  IPoint org_{};
  IPoint dims_{1, 1, 1};
  std::vector<std::uint8_t> occ_;
  std::vector<std::size_t> occupied_;
  std::vector<double> dist_;
  std::vector<std::int64_t> prefix_;
  BoxIndex boundary_;
  Point center_{};
};

}  // namespace fraclab
