#include "ucomp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

#include "ucomp/error.hpp"

namespace ucomp {

PointCloud::PointCloud(Tensor points) : points_(std::move(points)) {
  if (points_.rank() != 2 || points_.dim(1) != 3) {
    throw ShapeError("point cloud needs shape [N,3], got " + shape_str(points_.shape()));
  }
  if (!points_.all_finite()) throw NumericError("point cloud has non-finite coordinates");
}

PointCloud PointCloud::from_points(std::span<const std::array<double, 3>> points) {
  if (points.empty()) return PointCloud();
  std::vector<double> data;
  data.reserve(points.size() * 3);
  for (const auto& p : points) data.insert(data.end(), p.begin(), p.end());
  return PointCloud(Tensor({points.size(), 3}, std::move(data)));
}

namespace {

inline double sq_dist(const double* p, const double* q) {
  const double dx = p[0] - q[0];
  const double dy = p[1] - q[1];
  const double dz = p[2] - q[2];
  return dx * dx + dy * dy + dz * dz;
}

inline bool better(double d, std::size_t j, double best, std::size_t best_j) {
  return d < best || (d == best && j < best_j);
}

/// Targets in structure-of-arrays form, padded to a multiple of 4 with
/// points at infinity (their distance is +inf and never wins).
struct SoaTargets {
  explicit SoaTargets(std::span<const double> targets) : m(targets.size() / 3) {
    const std::size_t padded = (m + 3) / 4 * 4;
    const double inf = std::numeric_limits<double>::infinity();
    x.assign(padded, inf);
    y.assign(padded, inf);
    z.assign(padded, inf);
    for (std::size_t j = 0; j < m; ++j) {
      x[j] = targets[3 * j];
      y[j] = targets[3 * j + 1];
      z[j] = targets[3 * j + 2];
    }
  }
  std::size_t m;
  std::vector<double> x, y, z;
};

/// Same operation order as sq_dist, so both searches see identical values.
void brute_force(std::span<const double> queries, std::span<const double> targets,
                 NearestNeighbors& out) {
  const std::size_t n = queries.size() / 3;
  const SoaTargets t(targets);
  const std::size_t padded = t.x.size();
  std::vector<double> dist(padded);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = queries.data() + 3 * i;
    double best;
#if defined(__AVX2__)
    const __m256d px = _mm256_set1_pd(p[0]), py = _mm256_set1_pd(p[1]), pz = _mm256_set1_pd(p[2]);
    __m256d lane_best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < padded; j += 4) {
      const __m256d dx = _mm256_sub_pd(px, _mm256_loadu_pd(t.x.data() + j));
      const __m256d dy = _mm256_sub_pd(py, _mm256_loadu_pd(t.y.data() + j));
      const __m256d dz = _mm256_sub_pd(pz, _mm256_loadu_pd(t.z.data() + j));
      const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                      _mm256_mul_pd(dz, dz));
      _mm256_storeu_pd(dist.data() + j, d);
      lane_best = _mm256_min_pd(lane_best, d);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, lane_best);
    best = std::min(std::min(lanes[0], lanes[1]), std::min(lanes[2], lanes[3]));
#else
    best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < padded; ++j) {
      const double dx = p[0] - t.x[j];
      const double dy = p[1] - t.y[j];
      const double dz = p[2] - t.z[j];
      dist[j] = dx * dx + dy * dy + dz * dz;
      best = dist[j] < best ? dist[j] : best;
    }
#endif
    std::size_t best_j = 0;
    while (dist[best_j] != best) ++best_j;
    out.index[i] = best_j;
    out.sq_dist[i] = best;
  }
}

class UniformGrid {
 public:
  explicit UniformGrid(std::span<const double> pts) : pts_(pts) {
    const std::size_t m = pts.size() / 3;
    lo_ = {pts[0], pts[1], pts[2]};
    std::array<double, 3> hi = lo_;
    for (std::size_t j = 0; j < m; ++j)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], pts[3 * j + a]);
        hi[a] = std::max(hi[a], pts[3 * j + a]);
      }
    double extent = 0.0;
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo_[a]);
    const double per_axis = std::max(1.0, std::ceil(std::cbrt(static_cast<double>(m) / 2.0)));
    cell_ = extent > 0.0 ? extent / per_axis : 1.0;
    for (int a = 0; a < 3; ++a) {
      dims_[a] = static_cast<long>(std::floor((hi[a] - lo_[a]) / cell_)) + 1;
    }
    const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(m);
    for (std::size_t j = 0; j < m; ++j) {
      cell_of[j] = flat(cell_coords(pts.data() + 3 * j));
      ++start_[cell_of[j] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    members_.resize(m);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t j = 0; j < m; ++j) members_[fill[cell_of[j]]++] = j;
  }

  void query(const double* p, std::size_t& best_j, double& best) const {
    const auto c = cell_coords(p);
    best = std::numeric_limits<double>::infinity();
    best_j = std::numeric_limits<std::size_t>::max();
    long reach = 0;
    for (int a = 0; a < 3; ++a) reach = std::max({reach, c[a], dims_[a] - 1 - c[a]});
    for (long r = 0; r <= reach; ++r) {
      for (long x = c[0] - r; x <= c[0] + r; ++x) {
        if (x < 0 || x >= dims_[0]) continue;
        for (long y = c[1] - r; y <= c[1] + r; ++y) {
          if (y < 0 || y >= dims_[1]) continue;
          const bool shell_xy = std::abs(x - c[0]) == r || std::abs(y - c[1]) == r;
          for (long z = c[2] - r; z <= c[2] + r; ++z) {
            if (z < 0 || z >= dims_[2]) continue;
            if (!shell_xy && std::abs(z - c[2]) != r) continue;
            const std::size_t cell = flat({x, y, z});
            for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) {
              const std::size_t j = members_[k];
              const double d = sq_dist(p, pts_.data() + 3 * j);
              if (better(d, j, best, best_j)) {
                best = d;
                best_j = j;
              }
            }
          }
        }
      }
      if (best_j != std::numeric_limits<std::size_t>::max()) {
        // Any unvisited cell lies outside the box of rings 0..r; stop once
        // the distance to that box's boundary clearly exceeds the best.
        double bound = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          const double lo = lo_[a] + static_cast<double>(c[a] - r) * cell_;
          const double hi = lo_[a] + static_cast<double>(c[a] + r + 1) * cell_;
          if (p[a] < lo || p[a] > hi) {
            bound = 0.0;
            break;
          }
          bound = std::min({bound, p[a] - lo, hi - p[a]});
        }
        if (bound > std::sqrt(best) * (1.0 + 1e-9) + 1e-12) break;
      }
    }
  }

 private:
  std::array<long, 3> cell_coords(const double* p) const {
    std::array<long, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((p[a] - lo_[a]) / cell_);
      c[a] = f < 0.0 ? 0 : (f >= static_cast<double>(dims_[a]) ? dims_[a] - 1 : static_cast<long>(f));
    }
    return c;
  }
  std::size_t flat(const std::array<long, 3>& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  std::span<const double> pts_;
  std::array<double, 3> lo_{};
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> members_;
};

std::array<double, 6> bounds(std::span<const double> pts) {
  std::array<double, 6> b{pts[0], pts[1], pts[2], pts[0], pts[1], pts[2]};
  for (std::size_t j = 0; j < pts.size(); j += 3)
    for (int a = 0; a < 3; ++a) {
      b[a] = std::min(b[a], pts[j + a]);
      b[3 + a] = std::max(b[3 + a], pts[j + a]);
    }
  return b;
}

// The grid only wins for large targets, and degrades badly when queries sit
// far outside the target box (e.g. a freshly initialised decoder). Both
// paths return identical results, so this is purely a cost choice.
bool grid_pays_off(std::span<const double> queries, std::span<const double> targets) {
  if (targets.size() / 3 < 1024) return false;
  const auto q = bounds(queries), t = bounds(targets);
  for (int a = 0; a < 3; ++a) {
    const double margin = 0.5 * (t[3 + a] - t[a]);
    if (q[a] < t[a] - margin || q[3 + a] > t[3 + a] + margin) return false;
  }
  return true;
}

void check_nonempty(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw ShapeError("chamfer distance of an empty point cloud");
}

double directional_sum(const NearestNeighbors& nn) {
  double s = 0.0;
  for (double d : nn.sq_dist) s += std::sqrt(d);
  return s;
}

}  // namespace

NearestNeighbors nearest_neighbors(std::span<const double> queries, std::span<const double> targets,
                                   NnMethod method) {
  if (queries.size() % 3 || targets.size() % 3) throw ShapeError("nearest_neighbors: packed xyz expected");
  check_nonempty(queries.size(), targets.size());
  const std::size_t n = queries.size() / 3;
  NearestNeighbors out{std::vector<std::size_t>(n), std::vector<double>(n)};
  if (method == NnMethod::kBruteForce ||
      (method == NnMethod::kAuto && !grid_pays_off(queries, targets))) {
    brute_force(queries, targets, out);
  } else {
    const UniformGrid grid(targets);
    for (std::size_t i = 0; i < n; ++i) grid.query(queries.data() + 3 * i, out.index[i], out.sq_dist[i]);
  }
  return out;
}

double partial_chamfer(const PointCloud& from, const PointCloud& to, Reduction reduction,
                       NnMethod method) {
  check_nonempty(from.size(), to.size());
  const double s = directional_sum(nearest_neighbors(from.coords(), to.coords(), method));
  return reduction == Reduction::kMean ? s / static_cast<double>(from.size()) : s;
}

double full_chamfer(const PointCloud& a, const PointCloud& b, Reduction reduction, NnMethod method) {
  return partial_chamfer(a, b, reduction, method) + partial_chamfer(b, a, reduction, method);
}

double eval_metric(const PointCloud& predicted, const PointCloud& ground_truth) {
  return full_chamfer(predicted, ground_truth, Reduction::kMean) * 1e4;
}

Var partial_chamfer(Var from, Var to, std::size_t batch, Reduction reduction, NnMethod method) {
  const Tensor& fv = from.value();
  const Tensor& tv = to.value();
  if (fv.rank() != 2 || fv.dim(1) != 3 || tv.rank() != 2 || tv.dim(1) != 3 || batch == 0 ||
      fv.dim(0) % batch || tv.dim(0) % batch) {
    throw ShapeError("partial_chamfer: incompatible shapes " + shape_str(fv.shape()) + " and " +
                     shape_str(tv.shape()) + " for batch " + std::to_string(batch));
  }
  const std::size_t n = fv.dim(0) / batch, m = tv.dim(0) / batch;
  const double norm = reduction == Reduction::kMean ? 1.0 / static_cast<double>(n) : 1.0;

  Tensor out({batch, 1});
  std::vector<std::size_t> pairs(batch * n);
  for (std::size_t s = 0; s < batch; ++s) {
    const auto nn = nearest_neighbors(fv.data().subspan(3 * n * s, 3 * n),
                                      tv.data().subspan(3 * m * s, 3 * m), method);
    const double total = directional_sum(nn);
    out[s] = reduction == Reduction::kMean ? total / static_cast<double>(n) : total;
    std::copy(nn.index.begin(), nn.index.end(), pairs.begin() + static_cast<long>(n * s));
  }

  return from.tape().record(
      OpKind::kCustom, "partial_chamfer", {from, to}, std::move(out),
      [from, to, pairs, n, m, norm](const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& fv = from.value();
        const Tensor& tv = to.value();
        for (std::size_t e = 0; e < pairs.size(); ++e) {
          const std::size_t s = e / n;
          const std::size_t j = s * m + pairs[e];
          const double* p = fv.raw() + 3 * e;
          const double* q = tv.raw() + 3 * j;
          const double d = std::sqrt(sq_dist(p, q));
          if (d == 0.0) continue;
          const double w = g[s] * norm / d;
          for (int a = 0; a < 3; ++a) {
            const double diff = w * (p[a] - q[a]);
            if (gi[0]) (*gi[0])[3 * e + a] += diff;
            if (gi[1]) (*gi[1])[3 * j + a] -= diff;
          }
        }
      });
}

Var full_chamfer(Var a, Var b, std::size_t batch, Reduction reduction, NnMethod method) {
  return add(partial_chamfer(a, b, batch, reduction, method),
             partial_chamfer(b, a, batch, reduction, method));
}

PointCloud normalize_to_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) return cloud;
  std::array<double, 3> lo = cloud.point(0), hi = lo;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  double extent = 0.0;
  std::array<double, 3> center{};
  for (int a = 0; a < 3; ++a) {
    extent = std::max(extent, hi[a] - lo[a]);
    center[a] = 0.5 * (lo[a] + hi[a]);
  }
  const double s = extent > 0.0 ? 1.0 / extent : 1.0;
  Tensor t = cloud.tensor();
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a) t[3 * i + a] = (t[3 * i + a] - center[a]) * s;
  return PointCloud(std::move(t));
}

Tensor stack_clouds(std::span<const PointCloud> clouds) {
  if (clouds.empty()) throw ShapeError("stack_clouds: no clouds");
  const std::size_t n = clouds.front().size();
  std::vector<double> data;
  data.reserve(clouds.size() * n * 3);
  for (const auto& c : clouds) {
    if (c.size() != n) {
      throw ShapeError("stack_clouds: resolution mismatch " + std::to_string(c.size()) + " vs " +
                       std::to_string(n));
    }
    data.insert(data.end(), c.coords().begin(), c.coords().end());
  }
  return Tensor({clouds.size() * n, 3}, std::move(data));
}

std::vector<PointCloud> split_clouds(const Tensor& stacked, std::size_t batch) {
  if (stacked.rank() != 2 || stacked.dim(1) != 3 || batch == 0 || stacked.dim(0) % batch) {
    throw ShapeError("split_clouds: cannot split " + shape_str(stacked.shape()) + " into " +
                     std::to_string(batch));
  }
  const std::size_t n = stacked.dim(0) / batch;
  std::vector<PointCloud> out;
  out.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    auto first = stacked.data().begin() + static_cast<long>(3 * n * s);
    out.emplace_back(Tensor({n, 3}, std::vector<double>(first, first + static_cast<long>(3 * n))));
  }
  return out;
}

}  // namespace ucomp
