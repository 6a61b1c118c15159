#include "ucomp/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "ucomp/error.hpp"

namespace ucomp {

const char* param_set_name(ParamSet set) {
  switch (set) {
    case ParamSet::kAutoEncoder: return "AE";
    case ParamSet::kTransfer: return "F";
    case ParamSet::kCritic: return "D";
  }
  return "?";
}

Binder::Binder(Tape& tape, std::vector<ParamSet> trainable)
    : tape_(&tape), trainable_(std::move(trainable)) {}

bool Binder::trainable(ParamSet set) const {
  return std::find(trainable_.begin(), trainable_.end(), set) != trainable_.end();
}

Var Binder::operator()(const Parameter& p) {
  if (auto it = leaves_.find(&p); it != leaves_.end()) return it->second;
  Var v = trainable(p.owner) ? tape_->variable(p.value) : tape_->constant(p.value);
  leaves_.emplace(&p, v);
  order_.emplace_back(&p, v);
  return v;
}

std::optional<Var> Binder::find(const Parameter& p) const {
  if (auto it = leaves_.find(&p); it != leaves_.end()) return it->second;
  return std::nullopt;
}

Mlp::Mlp(std::string_view name, std::vector<std::size_t> widths, Activation hidden, Activation last,
         ParamSet owner, Rng& rng, double slope)
    : widths_(std::move(widths)), slope_(slope) {
  if (widths_.size() < 2) throw ValidationError("mlp '" + std::string(name) + "' needs >= 2 widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    if (in == 0 || out == 0) throw ValidationError("mlp '" + std::string(name) + "' has a zero width");
    // Uniform fan-in scaling.
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({in, out});
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b({1, out});
    for (double& v : b.data()) v = rng.uniform(-bound, bound);
    const std::string prefix = std::string(name) + "/l" + std::to_string(l);
    layers_.push_back(Layer{Parameter{prefix + "/W", std::move(w), owner},
                            Parameter{prefix + "/b", std::move(b), owner},
                            l + 2 == widths_.size() ? last : hidden});
  }
}

std::vector<AffineLayerRef> Mlp::bind_layers(Binder& bind) const {
  std::vector<AffineLayerRef> refs;
  refs.reserve(layers_.size());
  for (const auto& l : layers_) refs.push_back({bind(l.weight), bind(l.bias), l.activation, slope_});
  return refs;
}

Var Mlp::forward(Binder& bind, Var x) const {
  if (x.value().rank() != 2 || x.value().dim(1) != in_dim()) {
    throw ShapeError("mlp input " + shape_str(x.shape()) + " does not match width " +
                     std::to_string(in_dim()));
  }
  const auto refs = bind_layers(bind);
  return affine_stack_forward(refs, x);
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

namespace {

std::vector<std::size_t> concat_widths(std::size_t first, const std::vector<std::size_t>& mid,
                                       std::size_t last) {
  std::vector<std::size_t> w{first};
  w.insert(w.end(), mid.begin(), mid.end());
  w.push_back(last);
  return w;
}

}  // namespace

Encoder::Encoder(std::string_view name, std::vector<std::size_t> widths, std::size_t points,
                 ParamSet owner, Rng& rng)
    : mlp_(name, [&] {
        widths.insert(widths.begin(), 3);
        return widths;
      }(), Activation::kLeakyRelu, Activation::kIdentity, owner, rng),
      points_(points) {}

Var Encoder::encode(Binder& bind, Var clouds, std::size_t batch) const {
  const Tensor& c = clouds.value();
  if (c.rank() != 2 || c.dim(1) != 3 || batch == 0 || c.dim(0) != batch * points_) {
    throw ShapeError("encoder expects " + std::to_string(batch) + " clouds of " +
                     std::to_string(points_) + " points, got " + shape_str(c.shape()));
  }
  return encode_any(bind, clouds, batch);
}

Var Encoder::encode_any(Binder& bind, Var clouds, std::size_t batch) const {
  const Tensor& c = clouds.value();
  if (c.rank() != 2 || c.dim(1) != 3 || batch == 0 || c.dim(0) % batch != 0) {
    throw ShapeError("encoder expects " + std::to_string(batch) + " stacked clouds, got " +
                     shape_str(c.shape()));
  }
  const std::size_t points = c.dim(0) / batch;  // c dangles once the tape grows
  const auto refs = mlp_.bind_layers(bind);
  const bool frozen = std::none_of(refs.begin(), refs.end(), [](const AffineLayerRef& l) {
    return l.weight.requires_grad() || l.bias.requires_grad();
  });
  if (frozen && !clouds.requires_grad()) {
    return bind.tape().constant(affine_stack_group_max(refs, clouds.value(), points));
  }
  Var features = mlp_.forward(bind, clouds);
  Var grouped = reshape(features, {batch, points, latent_dim()});
  return max_over_axis(grouped, 1);
}

Decoder::Decoder(std::string_view name, std::size_t latent, std::vector<std::size_t> hidden,
                 std::size_t points, ParamSet owner, Rng& rng)
    : mlp_(name, concat_widths(latent, hidden, 3 * points), Activation::kLeakyRelu,
           Activation::kIdentity, owner, rng),
      points_(points) {}

Var Decoder::decode(Binder& bind, Var latent) const {
  const Tensor& z = latent.value();
  if (z.rank() != 2 || z.dim(1) != latent_dim()) {
    throw ShapeError("decoder expects latent width " + std::to_string(latent_dim()) + ", got " +
                     shape_str(z.shape()));
  }
  const std::size_t batch = z.dim(0);
  return reshape(mlp_.forward(bind, latent), {batch * points_, 3});
}

IncompleteToComplete::IncompleteToComplete(std::string_view name, std::size_t d_x, std::size_t d_r,
                                           std::size_t d_z, std::size_t width, Rng& rng)
    : mlp_(name, {d_x, width, width, d_r + d_z}, Activation::kLeakyRelu, Activation::kIdentity,
           ParamSet::kTransfer, rng),
      d_r_(d_r),
      d_z_(d_z) {}

TransferOutput IncompleteToComplete::transfer(Binder& bind, Var x) const {
  Var out = mlp_.forward(bind, x);
  if (d_z_ == 0) return {out, Var()};
  return {slice_cols(out, 0, d_r_), sigmoid(slice_cols(out, d_r_, d_r_ + d_z_))};
}

CompleteToIncomplete::CompleteToIncomplete(std::string_view name, std::size_t d_r, std::size_t d_z,
                                           std::size_t d_x, std::size_t width, Rng& rng)
    : mlp_(name, {d_r + d_z, width, width, d_x}, Activation::kLeakyRelu, Activation::kIdentity,
           ParamSet::kTransfer, rng),
      d_r_(d_r),
      d_z_(d_z) {}

Var CompleteToIncomplete::transfer(Binder& bind, Var rep, Var code) const {
  if (rep.value().rank() != 2 || rep.value().dim(1) != d_r_) {
    throw ShapeError("F_Y expects representation width " + std::to_string(d_r_) + ", got " +
                     shape_str(rep.shape()));
  }
  if (d_z_ == 0) return mlp_.forward(bind, rep);
  if (!code.valid() || code.value().rank() != 2 || code.value().dim(1) != d_z_ ||
      code.value().dim(0) != rep.value().dim(0)) {
    throw ShapeError("F_Y expects a [" + std::to_string(rep.value().dim(0)) + "," +
                     std::to_string(d_z_) + "] missing-region code");
  }
  return mlp_.forward(bind, concat_cols(rep, code));
}

Critic::Critic(std::string_view name, std::size_t in, std::size_t width, Rng& rng)
    : mlp_(name, {in, width, width, 1}, Activation::kLeakyRelu, Activation::kIdentity,
           ParamSet::kCritic, rng) {}

Var Critic::score(Binder& bind, Var v) const {
  if (v.value().rank() != 2 || v.value().dim(1) != in_dim()) {
    throw ShapeError("critic expects width " + std::to_string(in_dim()) + ", got " +
                     shape_str(v.shape()));
  }
  return mlp_.forward(bind, v);
}

Var Critic::input_gradient(Binder& bind, Var v) const {
  if (v.value().rank() != 2 || v.value().dim(1) != in_dim()) {
    throw ShapeError("critic expects width " + std::to_string(in_dim()) + ", got " +
                     shape_str(v.shape()));
  }
  const auto refs = mlp_.bind_layers(bind);
  return ucomp::input_gradient(refs, v);
}

NetworkBundle::NetworkBundle(ModelConfig config) : config_(std::move(config)) {
  const ModelConfig& c = config_;
  if (c.d_r == 0 || c.points == 0) throw ValidationError("d_r and points must be positive");
  if (c.coding && c.d_z == 0) throw ValidationError("d_z must be positive when coding is enabled");
  const std::size_t d_x = c.incomplete_dim();
  const std::size_t d_z = c.code_dim();

  // Each network draws from its own stream so enabling or ablating one part
  // leaves the initialization of the others unchanged.
  auto stream = [&](std::string_view name) { return Rng::derive(c.seed, name); };
  {
    Rng r = stream("E_X");
    auto widths = c.encoder_widths;
    widths.push_back(d_x);
    encoder_x = Encoder("E_X", widths, c.points, ParamSet::kAutoEncoder, r);
  }
  {
    Rng r = stream("G_X");
    decoder_x = Decoder("G_X", d_x, c.decoder_widths, c.points, ParamSet::kAutoEncoder, r);
  }
  {
    Rng r = stream("E_Y");
    auto widths = c.encoder_widths;
    widths.push_back(c.d_r);
    encoder_y = Encoder("E_Y", widths, c.points, ParamSet::kAutoEncoder, r);
  }
  {
    Rng r = stream("G_Y");
    decoder_y = Decoder("G_Y", c.d_r, c.decoder_widths, c.points, ParamSet::kAutoEncoder, r);
  }
  {
    Rng r = stream("F_X");
    transfer_x = IncompleteToComplete("F_X", d_x, c.d_r, d_z, c.transfer_width, r);
  }
  {
    Rng r = stream("F_Y");
    transfer_y = CompleteToIncomplete("F_Y", c.d_r, d_z, d_x, c.transfer_width, r);
  }
  if (c.critics) {
    Rng rx = stream("D_X");
    critic_x.emplace("D_X", d_x, c.critic_width, rx);
    Rng ry = stream("D_Y");
    critic_y.emplace("D_Y", c.d_r, c.critic_width, ry);
  }
  validate_partition();
}

std::vector<Parameter*> NetworkBundle::parameters() {
  std::vector<Parameter*> out;
  auto append = [&](Mlp& m) {
    auto p = m.parameters();
    out.insert(out.end(), p.begin(), p.end());
  };
  append(encoder_x.mlp());
  append(decoder_x.mlp());
  append(encoder_y.mlp());
  append(decoder_y.mlp());
  append(transfer_x.mlp());
  append(transfer_y.mlp());
  if (critic_x) append(critic_x->mlp());
  if (critic_y) append(critic_y->mlp());
  return out;
}

std::vector<const Parameter*> NetworkBundle::parameters() const {
  auto mut = const_cast<NetworkBundle*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> NetworkBundle::parameters(ParamSet set) {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->owner == set) out.push_back(p);
  return out;
}

std::vector<const Parameter*> NetworkBundle::parameters(ParamSet set) const {
  auto mut = const_cast<NetworkBundle*>(this)->parameters(set);
  return {mut.begin(), mut.end()};
}

Parameter* NetworkBundle::find(std::string_view id) {
  for (Parameter* p : parameters())
    if (p->id == id) return p;
  return nullptr;
}

void NetworkBundle::validate_partition() const {
  std::set<std::string> ids;
  auto check = [&](const Mlp& m, ParamSet expected) {
    for (const Parameter* p : m.parameters()) {
      if (p->owner != expected) {
        throw ValidationError("parameter " + p->id + " assigned to " + param_set_name(p->owner) +
                              ", expected " + param_set_name(expected));
      }
      if (!ids.insert(p->id).second) throw ValidationError("duplicate parameter id " + p->id);
    }
  };
  check(encoder_x.mlp(), ParamSet::kAutoEncoder);
  check(decoder_x.mlp(), ParamSet::kAutoEncoder);
  check(encoder_y.mlp(), ParamSet::kAutoEncoder);
  check(decoder_y.mlp(), ParamSet::kAutoEncoder);
  check(transfer_x.mlp(), ParamSet::kTransfer);
  check(transfer_y.mlp(), ParamSet::kTransfer);
  if (critic_x) check(critic_x->mlp(), ParamSet::kCritic);
  if (critic_y) check(critic_y->mlp(), ParamSet::kCritic);
}

Tensor sample_missing_codes(Rng& rng, std::size_t batch, std::size_t d_z) {
  Tensor codes({batch, d_z});
  for (double& v : codes.data()) v = rng.uniform();
  return codes;
}

std::uint64_t parameter_checksum(const NetworkBundle& bundle, ParamSet set) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : bundle.parameters(set)) {
    for (double v : p->value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace ucomp
