#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fraclab {

inline constexpr int kMaxDim = 3;

using Point = std::array<double, kMaxDim>;
using IPoint = std::array<std::int64_t, kMaxDim>;

// Error raised on precondition and validation failures. `code` is a short
// machine-readable tag, `what()` the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(detail), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

template <typename... Args>
[[noreturn]] void fail(const std::string& code, Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  throw Error(code, oss.str());
}

inline double dist2(const Point& a, const Point& b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

inline double sphere_area(int n) { return n * unit_ball_volume(n); }

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  void merge(const CompensatedSum& o) {
    add(o.sum_);
    add(o.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// splitmix64 finalizer; used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Process-wide worker cap, set by the CLI `--jobs` flag.
inline int& worker_count() {
  static int jobs = 1;
  return jobs;
}

// Runs `body(chunk)` for chunk in [0, chunks) on up to worker_count()
// threads. The chunk decomposition is fixed by the caller, so any ordered
// reduction over per-chunk results is independent of the worker count.
inline void parallel_chunks(std::size_t chunks,
                            const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1, worker_count()), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) body(c);
    });
  }
  for (auto& t : pool) t.join();
}

// Ordered map-reduce of compensated partial sums over [0, count).
template <typename F>
double parallel_sum(std::size_t count, std::size_t chunk_size, F&& term) {
  if (count == 0) return 0.0;
  const std::size_t chunks = (count + chunk_size - 1) / chunk_size;
  std::vector<CompensatedSum> partial(chunks);
  parallel_chunks(chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk_size;
    const std::size_t hi = std::min(count, lo + chunk_size);
    for (std::size_t i = lo; i < hi; ++i) partial[c].add(term(i));
  });
  CompensatedSum total;
  for (const auto& p : partial) total.merge(p);
  return total.value();
}

// Least-squares line y = a + b x with coefficient of determination.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) fail("degenerate-fit", "need at least two points for a line fit");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) fail("degenerate-fit", "abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  f.slope_stderr = m > 2 ? std::sqrt(sse / (m - 2) / sxx) : 0.0;
  return f;
}

}  // namespace fraclab
