#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ucomp/geometry.hpp"
#include "ucomp/rng.hpp"

namespace ucomp {

using Vec3 = std::array<double, 3>;

enum class Category : std::uint8_t { kPlaneLike, kBox, kCylinder, kChair, kTable };

std::string_view category_name(Category c);
Category parse_category(std::string_view name);
std::vector<Category> parse_categories(std::string_view comma_list);

// Surface primitives for area-weighted sampling.

/// Parallelogram origin + s·u + t·v, s,t ∈ [0,1].
struct Quad {
  Vec3 origin, u, v;
};
/// Open cylinder wall around `axis` (unit) from `base`, length `height`.
struct CylinderWall {
  Vec3 base, axis;
  double radius, height;
};
/// Flat disk with unit `normal`.
struct Disk {
  Vec3 center, normal;
  double radius;
};
using Primitive = std::variant<Quad, CylinderWall, Disk>;

double surface_area(const Primitive& p);
Vec3 sample_point(const Primitive& p, Rng& rng);

/// Six faces of an axis-aligned box (order: -x,+x,-y,+y,-z,+z).
std::vector<Primitive> box_surfaces(const Vec3& center, const Vec3& half_extent);
/// Wall and two caps of a cylinder along `axis` (0,1,2).
std::vector<Primitive> cylinder_surfaces(const Vec3& center, int axis, double radius,
                                         double height);

/// `n` points uniformly distributed by area over the primitives. If
/// `source` is given it receives the primitive index of each point.
PointCloud sample_surfaces(std::span<const Primitive> prims, std::size_t n, Rng& rng,
                           std::vector<std::size_t>* source = nullptr);

/// Randomized parametric shape of a category.
std::vector<Primitive> random_shape(Category category, Rng& rng);

/// `points` samples of a random shape, normalized to the unit cube.
PointCloud generate_complete(Category category, std::size_t points, Rng& rng);

/// The eight unit cube-corner viewing directions.
std::array<Vec3, 8> view_directions();

/// Keeps the τ-fraction of points with the smallest projection onto `view`
/// and pads back to `resolution` by resampling kept points with replacement.
/// Every output point is an input point.
PointCloud make_partial(const PointCloud& cloud, const Vec3& view, double tau,
                        std::size_t resolution, Rng& rng);

/// Pads or subsamples to exactly `resolution` points (subset or resampling
/// with replacement). Keeps the cloud unchanged if it already matches.
PointCloud resample(const PointCloud& cloud, std::size_t resolution, Rng& rng);

struct ShapeSample {
  std::string id;
  Category category = Category::kBox;
  PointCloud complete;
  std::vector<PointCloud> partials;  ///< one per view direction
};

enum class Split : std::uint8_t { kTrainIncomplete, kTrainComplete, kEval };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct DatasetSpec {
  std::vector<Category> categories{Category::kBox, Category::kCylinder};
  std::size_t count = 64;  ///< total objects, spread round-robin over categories
  std::size_t points = 2048;
  double tau = 0.5;
  std::uint64_t seed = 0;
  double eval_fraction = 0.25;

  void validate() const;
};

struct Dataset {
  std::vector<ShapeSample> samples;
  std::vector<Split> splits;  ///< parallel to samples

  /// Partials of every train-incomplete object.
  std::vector<PointCloud> incomplete_pool() const;
  /// Completes of every train-complete object.
  std::vector<PointCloud> complete_pool() const;
  std::vector<const ShapeSample*> with_split(Split s) const;
};

/// Generates every object and assigns disjoint splits: per category, the
/// first ⌈eval_fraction·n⌉ objects are eval, the rest alternate between the
/// incomplete and complete training pools.
Dataset build_dataset(const DatasetSpec& spec);

/// <root>/complete/<id>.xyz, <root>/partial/<id>_<v>.xyz, <root>/manifest.txt
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset read_dataset(const std::filesystem::path& root);

// Point cloud files.

PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);
std::string format_xyz(const PointCloud& cloud);
PointCloud parse_xyz(std::string_view text, std::string_view origin = "<memory>");

void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
std::string format_ply(const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);
PointCloud parse_ply(std::string_view text, std::string_view origin = "<memory>");

}  // namespace ucomp
