#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ucomp/tape.hpp"
#include "ucomp/tensor.hpp"

namespace ucomp {

/// Fixed-count set of 3D points stored as an [N,3] tensor.
class PointCloud {
 public:
  PointCloud() = default;
  /// Requires shape [N,3] with finite coordinates.
  explicit PointCloud(Tensor points);
  static PointCloud from_points(std::span<const std::array<double, 3>> points);

  std::size_t size() const noexcept { return points_.empty() ? 0 : points_.dim(0); }
  bool empty() const noexcept { return size() == 0; }
  const Tensor& tensor() const noexcept { return points_; }
  std::span<const double> coords() const noexcept { return points_.data(); }
  std::array<double, 3> point(std::size_t i) const {
    return {points_[3 * i], points_[3 * i + 1], points_[3 * i + 2]};
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

 private:
  Tensor points_;
};

enum class Reduction { kSum, kMean };

/// kBruteForce is the normative O(N·M) search; kGrid is a uniform-grid
/// accelerator that returns bit-identical results. kAuto picks whichever
/// should be cheaper for the clouds at hand.
enum class NnMethod { kBruteForce, kGrid, kAuto };

struct NearestNeighbors {
  std::vector<std::size_t> index;  ///< nearest target per query, lowest index on ties
  std::vector<double> sq_dist;     ///< squared Euclidean distance to it
};

/// Nearest target point for every query; both spans hold packed xyz triples.
NearestNeighbors nearest_neighbors(std::span<const double> queries, std::span<const double> targets,
                                   NnMethod method = NnMethod::kBruteForce);

/// Directional term: Σ_{p∈from} min_{q∈to} ‖p−q‖ (divided by |from| for kMean).
double partial_chamfer(const PointCloud& from, const PointCloud& to,
                       Reduction reduction = Reduction::kMean,
                       NnMethod method = NnMethod::kBruteForce);

/// partial_chamfer(a→b) + partial_chamfer(b→a).
double full_chamfer(const PointCloud& a, const PointCloud& b, Reduction reduction = Reduction::kMean,
                    NnMethod method = NnMethod::kBruteForce);

/// Per-point Chamfer distance ×10⁴ (mean reduction in both directions).
double eval_metric(const PointCloud& predicted, const PointCloud& ground_truth);

// Differentiable batched forms. `from` holds batch clouds of equal size
// stacked as [batch·N,3]; likewise `to`. The result is [batch,1], one value
// per cloud pair. Gradients flow through the chosen nearest pairs only.

Var partial_chamfer(Var from, Var to, std::size_t batch, Reduction reduction = Reduction::kMean,
                    NnMethod method = NnMethod::kBruteForce);
Var full_chamfer(Var a, Var b, std::size_t batch, Reduction reduction = Reduction::kMean,
                 NnMethod method = NnMethod::kBruteForce);

/// Translates the bounding-box center to the origin and scales the largest
/// extent to 1, so coordinates lie in [-0.5, 0.5]³.
PointCloud normalize_to_unit_cube(const PointCloud& cloud);

/// Stacks clouds of equal size into a [batch·N,3] tensor.
Tensor stack_clouds(std::span<const PointCloud> clouds);
/// Inverse of stack_clouds.
std::vector<PointCloud> split_clouds(const Tensor& stacked, std::size_t batch);

}  // namespace ucomp
