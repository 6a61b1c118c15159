#include "ucomp/objectives.hpp"

#include "ucomp/error.hpp"

namespace ucomp {

IncompleteCycle incomplete_cycle(Binder& bind, const NetworkBundle& nets, Var incomplete,
                                 std::size_t batch) {
  IncompleteCycle c;
  c.latent = nets.encoder_x.encode(bind, incomplete, batch);
  const TransferOutput xy = nets.transfer_x.transfer(bind, c.latent);
  c.rep = xy.rep;
  c.code = xy.code;
  c.completion = nets.decoder_y.decode(bind, c.rep);
  c.cycled = nets.transfer_y.transfer(bind, xy.rep, xy.code);
  c.reconstruction = nets.decoder_x.decode(bind, c.cycled);
  return c;
}

CompleteCycle complete_cycle(Binder& bind, const NetworkBundle& nets, Var complete,
                             std::size_t batch, const Tensor* codes) {
  CompleteCycle c;
  c.rep = nets.encoder_y.encode(bind, complete, batch);
  if (nets.transfer_y.code_dim() > 0) {
    if (codes == nullptr) throw ValidationError("complete_cycle: missing-region codes required");
    c.code = bind.tape().constant(*codes);
  }
  c.transferred = nets.transfer_y.transfer(bind, c.rep, c.code);
  c.incomplete_prediction = nets.decoder_x.decode(bind, c.transferred);
  const TransferOutput back = nets.transfer_x.transfer(bind, c.transferred);
  c.cycled_rep = back.rep;
  c.cycled_code = back.code;
  c.reconstruction = nets.decoder_y.decode(bind, c.cycled_rep);
  return c;
}

Var loss_ae(Binder& bind, const NetworkBundle& nets, Var incomplete, Var complete,
            std::size_t batch, const DistanceOptions& opts) {
  Var rec_x = nets.decoder_x.decode(bind, nets.encoder_x.encode(bind, incomplete, batch));
  Var rec_y = nets.decoder_y.decode(bind, nets.encoder_y.encode(bind, complete, batch));
  return add(mean(full_chamfer(incomplete, rec_x, batch, opts.reduction, opts.method)),
             mean(full_chamfer(complete, rec_y, batch, opts.reduction, opts.method)));
}

Var loss_code(Var sampled, Var recovered) {
  if (sampled.shape() != recovered.shape()) {
    throw ShapeError("loss_code: shapes " + shape_str(sampled.shape()) + " and " +
                     shape_str(recovered.shape()) + " differ");
  }
  return mean(sum_cols(square(sub(sampled, recovered))));
}

Var loss_cycle(Var incomplete, Var incomplete_reconstruction, Var complete,
               Var complete_reconstruction, std::size_t batch, const DistanceOptions& opts) {
  return add(mean(full_chamfer(incomplete, incomplete_reconstruction, batch, opts.reduction, opts.method)),
             mean(full_chamfer(complete, complete_reconstruction, batch, opts.reduction, opts.method)));
}

Var loss_partial(Var incomplete, Var completion, Var incomplete_prediction, Var complete,
                 std::size_t batch, const DistanceOptions& opts) {
  return add(mean(partial_chamfer(incomplete, completion, batch, opts.reduction, opts.method)),
             mean(partial_chamfer(incomplete_prediction, complete, batch, opts.reduction, opts.method)));
}

CriticLoss critic_loss(Binder& bind, const Critic& critic, Var real, Var fake, double lambda_gp,
                       GpMode mode, Rng* rng) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("critic_loss: real " + shape_str(real.shape()) + " and fake " +
                     shape_str(fake.shape()) + " differ");
  }
  Var at = real;
  if (mode == GpMode::kInterpolate) {
    if (rng == nullptr) throw ValidationError("critic_loss: interpolate mode needs an rng");
    const std::size_t rows = real.value().dim(0), cols = real.value().dim(1);
    Tensor mixed({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
      const double a = rng->uniform();
      for (std::size_t j = 0; j < cols; ++j) {
        mixed[i * cols + j] = a * real.value()[i * cols + j] + (1.0 - a) * fake.value()[i * cols + j];
      }
    }
    at = bind.tape().constant(std::move(mixed));
  }
  CriticLoss out;
  out.penalty = mean(square(add_scalar(l2_norm_rows(critic.input_gradient(bind, at)), -1.0)));
  Var adv = sub(mean(critic.score(bind, real)), mean(critic.score(bind, fake)));
  out.total = add(adv, scale(out.penalty, lambda_gp));
  return out;
}

Var generator_adv_loss(Binder& bind, const Critic& critic_x, Var transferred_to_x,
                       const Critic& critic_y, Var transferred_rep) {
  return add(mean(critic_x.score(bind, transferred_to_x)),
             mean(critic_y.score(bind, transferred_rep)));
}

}  // namespace ucomp
