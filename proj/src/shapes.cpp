#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ucomp/data.hpp"
#include "ucomp/error.hpp"

namespace ucomp {
namespace {

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

/// Two unit vectors completing `n` to an orthonormal frame.
std::pair<Vec3, Vec3> frame(const Vec3& n) {
  const Vec3 helper = std::abs(n[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  Vec3 e1 = cross(n, helper);
  e1 = (1.0 / norm(e1)) * e1;
  return {e1, cross(n, e1)};
}

Vec3 unit_axis(int axis) {
  Vec3 a{0, 0, 0};
  a[static_cast<std::size_t>(axis)] = 1.0;
  return a;
}

void append(std::vector<Primitive>& dst, std::vector<Primitive> src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kPlaneLike: return "plane-like";
    case Category::kBox: return "box";
    case Category::kCylinder: return "cylinder";
    case Category::kChair: return "composite-chair";
    case Category::kTable: return "composite-table";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  for (Category c : {Category::kPlaneLike, Category::kBox, Category::kCylinder, Category::kChair,
                     Category::kTable}) {
    if (name == category_name(c)) return c;
  }
  if (name == "plane") return Category::kPlaneLike;
  if (name == "chair") return Category::kChair;
  if (name == "table") return Category::kTable;
  throw ValidationError("unknown category '" + std::string(name) + "'");
}

std::vector<Category> parse_categories(std::string_view list) {
  std::vector<Category> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t end = std::min(list.find(',', pos), list.size());
    const std::string_view item = list.substr(pos, end - pos);
    if (!item.empty()) out.push_back(parse_category(item));
    pos = end + 1;
  }
  if (out.empty()) throw ValidationError("no categories given");
  return out;
}

double surface_area(const Primitive& p) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Quad>) {
          return norm(cross(s.u, s.v));
        } else if constexpr (std::is_same_v<T, CylinderWall>) {
          return 2.0 * std::numbers::pi * s.radius * s.height;
        } else {
          return std::numbers::pi * s.radius * s.radius;
        }
      },
      p);
}

Vec3 sample_point(const Primitive& p, Rng& rng) {
  return std::visit(
      [&rng](const auto& s) -> Vec3 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Quad>) {
          const double a = rng.uniform(), b = rng.uniform();
          return s.origin + a * s.u + b * s.v;
        } else if constexpr (std::is_same_v<T, CylinderWall>) {
          const auto [e1, e2] = frame(s.axis);
          const double theta = 2.0 * std::numbers::pi * rng.uniform();
          const double h = s.height * rng.uniform();
          return s.base + h * s.axis + s.radius * (std::cos(theta) * e1 + std::sin(theta) * e2);
        } else {
          const auto [e1, e2] = frame(s.normal);
          const double r = s.radius * std::sqrt(rng.uniform());
          const double theta = 2.0 * std::numbers::pi * rng.uniform();
          return s.center + r * (std::cos(theta) * e1 + std::sin(theta) * e2);
        }
      },
      p);
}

std::vector<Primitive> box_surfaces(const Vec3& c, const Vec3& h) {
  std::vector<Primitive> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (double side : {-1.0, 1.0}) {
      Vec3 origin = c;
      origin[static_cast<std::size_t>(axis)] += side * h[static_cast<std::size_t>(axis)];
      origin[static_cast<std::size_t>(a1)] -= h[static_cast<std::size_t>(a1)];
      origin[static_cast<std::size_t>(a2)] -= h[static_cast<std::size_t>(a2)];
      faces.push_back(Quad{origin, (2.0 * h[static_cast<std::size_t>(a1)]) * unit_axis(a1),
                           (2.0 * h[static_cast<std::size_t>(a2)]) * unit_axis(a2)});
    }
  }
  return faces;
}

std::vector<Primitive> cylinder_surfaces(const Vec3& center, int axis, double radius,
                                         double height) {
  const Vec3 dir = unit_axis(axis);
  const Vec3 base = center + (-0.5 * height) * dir;
  return {CylinderWall{base, dir, radius, height}, Disk{base, dir, radius},
          Disk{center + (0.5 * height) * dir, dir, radius}};
}

PointCloud sample_surfaces(std::span<const Primitive> prims, std::size_t n, Rng& rng,
                           std::vector<std::size_t>* source) {
  if (prims.empty() || n == 0) throw ValidationError("sample_surfaces: nothing to sample");
  std::vector<double> cumulative(prims.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    total += surface_area(prims[i]);
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw ValidationError("sample_surfaces: zero total area");
  if (source) source->assign(n, 0);
  Tensor pts({n, 3});
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                  prims.size() - 1);
    const Vec3 p = sample_point(prims[idx], rng);
    for (std::size_t a = 0; a < 3; ++a) pts[3 * k + a] = p[a];
    if (source) (*source)[k] = idx;
  }
  return PointCloud(std::move(pts));
}

std::vector<Primitive> random_shape(Category category, Rng& rng) {
  std::vector<Primitive> prims;
  switch (category) {
    case Category::kBox: {
      append(prims, box_surfaces({0, 0, 0}, {rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5),
                                             rng.uniform(0.2, 0.5)}));
      break;
    }
    case Category::kCylinder: {
      append(prims, cylinder_surfaces({0, 0, 0}, 1, rng.uniform(0.15, 0.4), rng.uniform(0.4, 1.0)));
      break;
    }
    case Category::kPlaneLike: {
      const double length = rng.uniform(0.9, 1.2);
      const double radius = rng.uniform(0.05, 0.09);
      append(prims, cylinder_surfaces({0, 0, 0}, 0, radius, length));
      const double span = rng.uniform(0.35, 0.6);
      const double chord = rng.uniform(0.08, 0.15);
      append(prims, box_surfaces({rng.uniform(-0.05, 0.1), 0, 0}, {chord, 0.01, span}));
      const double tail_x = -0.5 * length + 0.08;
      append(prims, box_surfaces({tail_x, 0, 0}, {0.05, 0.008, rng.uniform(0.12, 0.2)}));
      append(prims, box_surfaces({tail_x, rng.uniform(0.08, 0.14), 0}, {0.05, rng.uniform(0.06, 0.1), 0.008}));
      break;
    }
    case Category::kChair: {
      const double hx = rng.uniform(0.2, 0.3), hz = rng.uniform(0.2, 0.3);
      const double leg = rng.uniform(0.35, 0.5), back = rng.uniform(0.35, 0.6);
      const double t = 0.025;
      append(prims, box_surfaces({0, leg, 0}, {hx, t, hz}));
      append(prims, box_surfaces({0, leg + 0.5 * back, -hz + t}, {hx, 0.5 * back, t}));
      for (double sx : {-1.0, 1.0})
        for (double sz : {-1.0, 1.0})
          append(prims, box_surfaces({sx * (hx - t), 0.5 * leg, sz * (hz - t)}, {t, 0.5 * leg, t}));
      break;
    }
    case Category::kTable: {
      const double hx = rng.uniform(0.3, 0.5), hz = rng.uniform(0.2, 0.4);
      const double leg = rng.uniform(0.4, 0.7);
      const double t = 0.03;
      append(prims, box_surfaces({0, leg, 0}, {hx, t, hz}));
      for (double sx : {-1.0, 1.0})
        for (double sz : {-1.0, 1.0})
          append(prims, box_surfaces({sx * (hx - 2 * t), 0.5 * leg, sz * (hz - 2 * t)}, {t, 0.5 * leg, t}));
      break;
    }
  }
  return prims;
}

PointCloud generate_complete(Category category, std::size_t points, Rng& rng) {
  if (points == 0) throw ValidationError("generate_complete: points must be positive");
  const auto prims = random_shape(category, rng);
  return normalize_to_unit_cube(sample_surfaces(prims, points, rng));
}

std::array<Vec3, 8> view_directions() {
  std::array<Vec3, 8> dirs{};
  const double s = 1.0 / std::sqrt(3.0);
  std::size_t k = 0;
  for (double x : {-1.0, 1.0})
    for (double y : {-1.0, 1.0})
      for (double z : {-1.0, 1.0}) dirs[k++] = {s * x, s * y, s * z};
  return dirs;
}

PointCloud resample(const PointCloud& cloud, std::size_t resolution, Rng& rng) {
  if (cloud.empty()) throw ValidationError("resample: empty cloud");
  if (resolution == 0) throw ValidationError("resample: resolution must be positive");
  const std::size_t n = cloud.size();
  if (n == resolution) return cloud;
  std::vector<std::size_t> idx;
  if (n > resolution) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < resolution; ++i) {
      std::swap(all[i], all[i + rng.index(n - i)]);
    }
    idx.assign(all.begin(), all.begin() + static_cast<long>(resolution));
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (idx.size() < resolution) idx.push_back(rng.index(n));
  }
  Tensor out({resolution, 3});
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t a = 0; a < 3; ++a) out[3 * i + a] = cloud.tensor()[3 * idx[i] + a];
  return PointCloud(std::move(out));
}

PointCloud make_partial(const PointCloud& cloud, const Vec3& view, double tau,
                        std::size_t resolution, Rng& rng) {
  if (cloud.empty()) throw ValidationError("make_partial: empty cloud");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("make_partial: tau must lie in (0,1)");
  if (!(norm(view) > 0.0)) throw ValidationError("make_partial: degenerate view direction");
  const std::size_t n = cloud.size();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = cloud.point(i);
    proj[i] = p[0] * view[0] + p[1] * view[1] + p[2] * view[2];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proj[a] < proj[b] || (proj[a] == proj[b] && a < b);
  });
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(tau * static_cast<double>(n))));
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<long>(keep));
  std::sort(kept.begin(), kept.end());
  Tensor t({keep, 3});
  for (std::size_t i = 0; i < keep; ++i)
    for (std::size_t a = 0; a < 3; ++a) t[3 * i + a] = cloud.tensor()[3 * kept[i] + a];
  return resample(PointCloud(std::move(t)), resolution, rng);
}

}  // namespace ucomp
