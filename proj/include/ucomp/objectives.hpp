#pragma once

#include <cstdint>
#include <optional>

#include "ucomp/geometry.hpp"
#include "ucomp/models.hpp"
#include "ucomp/rng.hpp"
#include "ucomp/tape.hpp"

namespace ucomp {

/// Where the gradient penalty is evaluated: at the real samples, or at
/// random real/fake interpolates.
enum class GpMode : std::uint8_t { kReal, kInterpolate };

/// Distance settings shared by every Chamfer-based loss.
struct DistanceOptions {
  Reduction reduction = Reduction::kMean;
  NnMethod method = NnMethod::kBruteForce;
};

/// Intermediates of the incomplete → complete → incomplete round trip.
struct IncompleteCycle {
  Var latent;          ///< x = E_X(P_X)
  Var rep;             ///< x_y^r
  Var code;            ///< x_y^z (invalid without coding)
  Var completion;      ///< G_Y(x_y^r), the completed cloud
  Var cycled;          ///< x̂ = F_Y(x_y)
  Var reconstruction;  ///< G_X(x̂)
};

/// Intermediates of the complete → incomplete → complete round trip.
struct CompleteCycle {
  Var rep;                    ///< y^r = E_Y(P_Y)
  Var code;                   ///< sampled y^z (constant; invalid without coding)
  Var transferred;            ///< y_x = F_Y([y^r:y^z])
  Var incomplete_prediction;  ///< G_X(y_x)
  Var cycled_rep;             ///< ŷ^r
  Var cycled_code;            ///< ŷ^z
  Var reconstruction;         ///< G_Y(ŷ^r)
};

/// incomplete: [batch·N,3] clouds.
IncompleteCycle incomplete_cycle(Binder& bind, const NetworkBundle& nets, Var incomplete,
                                 std::size_t batch);

/// complete: [batch·N,3] clouds; codes: [batch,d_z] sampled codes, ignored
/// (and may be null) when the bundle has no code slot.
CompleteCycle complete_cycle(Binder& bind, const NetworkBundle& nets, Var complete,
                             std::size_t batch, const Tensor* codes);

/// Reconstruction loss of both autoencoders, averaged over the batch.
Var loss_ae(Binder& bind, const NetworkBundle& nets, Var incomplete, Var complete,
            std::size_t batch, const DistanceOptions& opts = {});

/// Squared Euclidean distance between sampled and recovered codes,
/// averaged over the batch rows.
Var loss_code(Var sampled, Var recovered);

/// full_chamfer(P_X, G_X(x̂)) + full_chamfer(P_Y, G_Y(ŷ^r)), batch mean.
Var loss_cycle(Var incomplete, Var incomplete_reconstruction, Var complete,
               Var complete_reconstruction, std::size_t batch, const DistanceOptions& opts = {});

/// partial_chamfer(P_X → G_Y(x_y^r)) + partial_chamfer(G_X(y_x) → P_Y), batch
/// mean. Both terms point from the incomplete shape to the complete one.
Var loss_partial(Var incomplete, Var completion, Var incomplete_prediction, Var complete,
                 std::size_t batch, const DistanceOptions& opts = {});

struct CriticLoss {
  Var total;    ///< E[D(real)] − E[D(fake)] + λ_gp·penalty
  Var penalty;  ///< E[(‖∇D‖ − 1)²]
};

/// WGAN-GP critic objective with the sign convention written in the method:
/// the critic minimizes its real score minus its fake score. `rng` is only
/// drawn from in kInterpolate mode.
CriticLoss critic_loss(Binder& bind, const Critic& critic, Var real, Var fake, double lambda_gp,
                       GpMode mode = GpMode::kReal, Rng* rng = nullptr);

/// E[D_X(y_x)] + E[D_Y(x_y^r)].
Var generator_adv_loss(Binder& bind, const Critic& critic_x, Var transferred_to_x,
                       const Critic& critic_y, Var transferred_rep);

}  // namespace ucomp
