#include "ucomp/trainer.hpp"

#include <chrono>
#include <cstdio>

#include "ucomp/error.hpp"
#include "ucomp/objectives.hpp"

namespace ucomp {
namespace {

template <class F>
auto guarded(const char* term, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw DivergenceError(term, e.what());
  }
}

void cell(std::string& row, const std::optional<double>& v) {
  row += ',';
  if (!v) return;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  row += buf;
}

}  // namespace

std::string metrics_header() { return "step,L_AE,L_code,L_cycle,L_partial,L_D,L_G,gp_x,gp_y,wall_ms\n"; }

std::string metrics_row(const LossReport& r, bool timing) {
  std::string row = std::to_string(r.step);
  for (const auto& v : {r.ae, r.code, r.cycle, r.partial, r.d, r.g, r.gp_x, r.gp_y}) cell(row, v);
  cell(row, timing ? r.wall_ms : 0.0);
  row += '\n';
  return row;
}

const char* substep_name(SubStep s) {
  switch (s) {
    case SubStep::kAutoEncoder: return "ae";
    case SubStep::kCritic: return "critic";
    case SubStep::kTransfer: return "transfer";
  }
  return "?";
}

Trainer::Trainer(TrainConfig config, TrainingPools pools)
    : config_((config.validate(), std::move(config))),
      pools_(std::move(pools)),
      nets_(config_.model_config()),
      optimizer_(config_.optimizer, config_.lr),
      rng_(Rng::derive(config_.seed, "trainer")) {
  if (pools_.incomplete.empty() || pools_.complete.empty()) {
    throw ValidationError("both training pools must be non-empty");
  }
  for (const auto* pool : {&pools_.incomplete, &pools_.complete}) {
    for (const PointCloud& c : *pool) {
      if (c.size() != config_.points) {
        throw ValidationError("training cloud has " + std::to_string(c.size()) +
                              " points, configured resolution is " + std::to_string(config_.points));
      }
    }
  }
}

Trainer::Batch Trainer::sample_batch() {
  const std::size_t B = config_.batch, N = config_.points;
  Batch b{Tensor({B * N, 3}), Tensor({B * N, 3}), Tensor()};
  for (std::size_t i = 0; i < B; ++i) {
    const PointCloud& x = pools_.incomplete[rng_.index(pools_.incomplete.size())];
    std::copy(x.coords().begin(), x.coords().end(), b.incomplete.raw() + i * N * 3);
  }
  for (std::size_t i = 0; i < B; ++i) {
    const PointCloud& y = pools_.complete[rng_.index(pools_.complete.size())];
    std::copy(y.coords().begin(), y.coords().end(), b.complete.raw() + i * N * 3);
  }
  if (nets_.config().code_dim() > 0) b.codes = sample_missing_codes(rng_, B, nets_.config().code_dim());
  return b;
}

void Trainer::apply(Binder& bind, const Gradients& grads, ParamSet set, double weight) {
  for (const auto& [param, leaf] : bind.bound()) {
    if (param->owner != set || !leaf.requires_grad() || !grads.reached(leaf)) continue;
    const Tensor& raw = grads.at(leaf);
    Tensor scaled;
    if (weight != 1.0) {
      scaled = raw;
      for (double& v : scaled.data()) v *= weight;
    }
    const Tensor& g = weight != 1.0 ? scaled : raw;
    if (!g.all_finite()) {
      throw DivergenceError(param_set_name(set), "non-finite gradient for " + param->id);
    }
    // The binder only hands out const views; the parameters belong to nets_.
    optimizer_.apply(const_cast<Parameter&>(*param), g);
  }
}

void Trainer::notify(SubStep s) {
  if (observer_) observer_(s, nets_);
}

void Trainer::autoencoder_update(const Batch& b, LossReport& report) {
  Tape tape;
  Binder bind(tape, {ParamSet::kAutoEncoder});
  Var loss = guarded("L_AE", [&] {
    return loss_ae(bind, nets_, tape.constant(b.incomplete), tape.constant(b.complete),
                   config_.batch, config_.distance());
  });
  report.ae = loss.value().item();
  apply(bind, tape.backward(loss), ParamSet::kAutoEncoder);
  notify(SubStep::kAutoEncoder);
}

void Trainer::critic_update(const Batch& b, LossReport& report) {
  Tape tape;
  Binder bind(tape, {ParamSet::kCritic});
  const std::size_t B = config_.batch;
  const Tensor* codes = b.codes.empty() ? nullptr : &b.codes;
  auto [x, yr, xy_rep, yx] = guarded("L_D", [&] {
    Var xl = nets_.encoder_x.encode(bind, tape.constant(b.incomplete), B);
    Var yl = nets_.encoder_y.encode(bind, tape.constant(b.complete), B);
    Var xy = nets_.transfer_x.transfer(bind, xl).rep;
    Var code = codes ? tape.constant(*codes) : Var();
    Var to_x = nets_.transfer_y.transfer(bind, yl, code);
    return std::tuple{xl, yl, xy, to_x};
  });
  Rng* rng = config_.gp_mode == GpMode::kInterpolate ? &rng_ : nullptr;
  const CriticLoss lx = guarded("T_DX", [&] {
    return critic_loss(bind, *nets_.critic_x, x, yx, config_.lambda_gp, config_.gp_mode, rng);
  });
  const CriticLoss ly = guarded("T_DY", [&] {
    return critic_loss(bind, *nets_.critic_y, yr, xy_rep, config_.lambda_gp, config_.gp_mode, rng);
  });
  Var loss = guarded("L_D", [&] { return add(lx.total, ly.total); });
  report.d = loss.value().item();
  report.gp_x = lx.penalty.value().item();
  report.gp_y = ly.penalty.value().item();
  apply(bind, tape.backward(loss), ParamSet::kCritic);
  notify(SubStep::kCritic);
}

TransferTerms Trainer::transfer_objective(Binder& bind, const Tensor& incomplete,
                                          const Tensor& complete, const Tensor* codes) const {
  Tape& tape = bind.tape();
  const std::size_t B = config_.batch;
  const DistanceOptions dist = config_.distance();
  Var X = tape.constant(incomplete);
  Var Y = tape.constant(complete);
  const IncompleteCycle ic = guarded("F forward", [&] { return incomplete_cycle(bind, nets_, X, B); });
  const CompleteCycle cc = guarded("F forward", [&] { return complete_cycle(bind, nets_, Y, B, codes); });

  TransferTerms t;
  auto accumulate = [&](Var term, double weight) {
    Var w = scale(term, weight);
    t.total = t.total.valid() ? add(t.total, w) : w;
  };
  if (!config_.ablate_gan) {
    t.g = guarded("L_G", [&] {
      return generator_adv_loss(bind, *nets_.critic_x, cc.transferred, *nets_.critic_y, ic.rep);
    });
    accumulate(*t.g, config_.lambda_g);
  }
  if (!config_.ablate_partial) {
    t.partial = guarded("L_partial", [&] {
      return loss_partial(X, ic.completion, cc.incomplete_prediction, Y, B, dist);
    });
    accumulate(*t.partial, config_.lambda_p);
  }
  if (!config_.ablate_cycle) {
    t.cycle = guarded("L_cycle", [&] {
      return loss_cycle(X, ic.reconstruction, Y, cc.reconstruction, B, dist);
    });
    accumulate(*t.cycle, config_.lambda_c);
  }
  if (!config_.ablate_coding) {
    t.code = guarded("L_code", [&] { return loss_code(cc.code, cc.cycled_code); });
    accumulate(*t.code, config_.lambda_code);
  }
  return t;
}

void Trainer::transfer_update(const Batch& b, LossReport& report) {
  Tape tape;
  std::optional<Var> ae_term;
  double ae_weight = 0.0;
  const bool ae_joins = config_.strategy != Strategy::kOriginal;
  std::vector<ParamSet> sets{ParamSet::kTransfer};
  if (ae_joins) sets.push_back(ParamSet::kAutoEncoder);
  Binder bind(tape, sets);
  const TransferTerms t = transfer_objective(bind, b.incomplete, b.complete, b.codes.empty() ? nullptr : &b.codes);
  if (t.g) report.g = t.g->value().item();
  if (t.partial) report.partial = t.partial->value().item();
  if (t.cycle) report.cycle = t.cycle->value().item();
  if (t.code) report.code = t.code->value().item();
  if (!t.total.valid()) return;  // every F term ablated

  switch (config_.strategy) {
    case Strategy::kOriginal: break;
    case Strategy::kGUpdatesAe: ae_term = t.g, ae_weight = config_.lambda_g; break;
    case Strategy::kPartialUpdatesAe: ae_term = t.partial, ae_weight = config_.lambda_p; break;
    case Strategy::kCycleUpdatesAe: ae_term = t.cycle, ae_weight = config_.lambda_c; break;
  }
  // Both sweeps read the pre-update parameter values held on the tape.
  const Gradients g_total = tape.backward(t.total);
  std::optional<Gradients> g_ae;
  if (ae_term) g_ae = tape.backward(*ae_term);
  apply(bind, g_total, ParamSet::kTransfer);
  if (g_ae) apply(bind, *g_ae, ParamSet::kAutoEncoder, ae_weight);
  notify(SubStep::kTransfer);
}

LossReport Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  LossReport report;
  report.step = step_ + 1;
  Batch b = sample_batch();
  autoencoder_update(b, report);
  if (!pretraining()) {
    if (!config_.ablate_gan) {
      for (std::size_t k = 0; k < config_.n_critic; ++k) {
        b = sample_batch();
        critic_update(b, report);
      }
    }
    transfer_update(b, report);
  }
  ++step_;
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ucomp
