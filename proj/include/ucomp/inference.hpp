#pragma once

#include <span>
#include <vector>

#include "ucomp/geometry.hpp"
#include "ucomp/models.hpp"
#include "ucomp/tensor.hpp"

namespace ucomp {

// Forward-only evaluation of trained networks. Input clouds of one call must
// share a point count, which may differ from the training resolution.

/// G_Y(F_X(E_X(P)).rep) for every partial cloud.
std::vector<PointCloud> complete_clouds(const NetworkBundle& nets, std::span<const PointCloud> partials);

/// G_X(F_Y([E_Y(P) : code])) for every complete cloud; `codes` is [n,d_z]
/// and ignored when the networks carry no code slot.
std::vector<PointCloud> predict_incomplete(const NetworkBundle& nets,
                                           std::span<const PointCloud> completes, const Tensor& codes);

/// E_Y(P): [n,d_r].
Tensor complete_representation(const NetworkBundle& nets, std::span<const PointCloud> completes);
/// F_X(E_X(P)).rep: [n,d_r].
Tensor transferred_representation(const NetworkBundle& nets, std::span<const PointCloud> partials);

}  // namespace ucomp
