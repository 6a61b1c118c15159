#include "ucomp/inference.hpp"

#include "ucomp/error.hpp"

namespace ucomp {
namespace {

Tensor stacked(std::span<const PointCloud> clouds) {
  if (clouds.empty()) throw ValidationError("no clouds given");
  return stack_clouds(clouds);
}

}  // namespace

std::vector<PointCloud> complete_clouds(const NetworkBundle& nets, std::span<const PointCloud> partials) {
  Tape tape;
  Binder bind(tape, {});
  Var x = nets.encoder_x.encode_any(bind, tape.constant(stacked(partials)), partials.size());
  Var out = nets.decoder_y.decode(bind, nets.transfer_x.transfer(bind, x).rep);
  return split_clouds(out.value(), partials.size());
}

std::vector<PointCloud> predict_incomplete(const NetworkBundle& nets,
                                           std::span<const PointCloud> completes, const Tensor& codes) {
  Tape tape;
  Binder bind(tape, {});
  Var y = nets.encoder_y.encode_any(bind, tape.constant(stacked(completes)), completes.size());
  Var code;
  if (nets.transfer_y.code_dim() > 0) {
    if (codes.rank() != 2 || codes.dim(0) != completes.size() || codes.dim(1) != nets.transfer_y.code_dim()) {
      throw ShapeError("expected codes of shape [" + std::to_string(completes.size()) + "," +
                       std::to_string(nets.transfer_y.code_dim()) + "], got " + shape_str(codes.shape()));
    }
    code = tape.constant(codes);
  }
  Var out = nets.decoder_x.decode(bind, nets.transfer_y.transfer(bind, y, code));
  return split_clouds(out.value(), completes.size());
}

Tensor complete_representation(const NetworkBundle& nets, std::span<const PointCloud> completes) {
  Tape tape;
  Binder bind(tape, {});
  return nets.encoder_y.encode_any(bind, tape.constant(stacked(completes)), completes.size()).value();
}

Tensor transferred_representation(const NetworkBundle& nets, std::span<const PointCloud> partials) {
  Tape tape;
  Binder bind(tape, {});
  Var x = nets.encoder_x.encode_any(bind, tape.constant(stacked(partials)), partials.size());
  return nets.transfer_x.transfer(bind, x).rep.value();
}

}  // namespace ucomp
