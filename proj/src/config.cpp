#include "ucomp/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ucomp/error.hpp"

namespace ucomp {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ValidationError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ValidationError(std::string(key) + ": expected a non-negative integer, got '" +
                          std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_widths(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_u64(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kOriginal: return "original";
    case Strategy::kGUpdatesAe: return "g-updates-ae";
    case Strategy::kPartialUpdatesAe: return "partial-updates-ae";
    case Strategy::kCycleUpdatesAe: return "cycle-updates-ae";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kOriginal, Strategy::kGUpdatesAe, Strategy::kPartialUpdatesAe,
                     Strategy::kCycleUpdatesAe}) {
    if (name == strategy_name(s)) return s;
  }
  throw ValidationError("unknown strategy '" + std::string(name) +
                        "' (original|g-updates-ae|partial-updates-ae|cycle-updates-ae)");
}

std::string_view reduction_name(Reduction r) { return r == Reduction::kSum ? "sum" : "mean"; }

Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::kSum;
  if (name == "mean") return Reduction::kMean;
  throw ValidationError("unknown reduction '" + std::string(name) + "' (sum|mean)");
}

std::string_view gp_mode_name(GpMode m) { return m == GpMode::kReal ? "real" : "interpolate"; }

GpMode parse_gp_mode(std::string_view name) {
  if (name == "real") return GpMode::kReal;
  if (name == "interpolate") return GpMode::kInterpolate;
  throw ValidationError("unknown gp mode '" + std::string(name) + "' (real|interpolate)");
}

std::string_view nn_method_name(NnMethod m) {
  switch (m) {
    case NnMethod::kBruteForce: return "brute";
    case NnMethod::kGrid: return "grid";
    case NnMethod::kAuto: return "auto";
  }
  return "?";
}

NnMethod parse_nn_method(std::string_view name) {
  if (name == "grid") return NnMethod::kGrid;
  if (name == "brute") return NnMethod::kBruteForce;
  if (name == "auto") return NnMethod::kAuto;
  throw ValidationError("unknown nn method '" + std::string(name) + "' (brute|grid)");
}

void TrainConfig::validate() const {
  for (auto [name, v] : {std::pair{"lambda_g", lambda_g}, std::pair{"lambda_c", lambda_c},
                         std::pair{"lambda_p", lambda_p}, std::pair{"lambda_gp", lambda_gp},
                         std::pair{"lambda_code", lambda_code}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be >= 0");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
  if (n_critic == 0) throw ValidationError("n_critic must be >= 1");
  if (batch == 0) throw ValidationError("batch must be >= 1");
  if (points == 0) throw ValidationError("points must be >= 1");
  if (d_r == 0) throw ValidationError("d_r must be >= 1");
  if (d_z == 0 && !ablate_coding) throw ValidationError("d_z must be >= 1 unless coding is ablated");
  if (encoder_widths.empty() || decoder_widths.empty()) {
    throw ValidationError("encoder_widths and decoder_widths need at least one layer");
  }
  for (std::size_t w : encoder_widths)
    if (w == 0) throw ValidationError("encoder_widths must be positive");
  for (std::size_t w : decoder_widths)
    if (w == 0) throw ValidationError("decoder_widths must be positive");
  if (transfer_width == 0 || critic_width == 0) throw ValidationError("widths must be positive");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.d_r = d_r;
  m.d_z = d_z;
  // d_x stays d_r + d_z under the coding ablation so the autoencoders are
  // identical across ablations; only the code slot of F_X/F_Y goes away.
  m.d_x = d_r + d_z;
  m.points = points;
  m.encoder_widths = encoder_widths;
  m.decoder_widths = decoder_widths;
  m.transfer_width = transfer_width;
  m.critic_width = critic_width;
  m.coding = !ablate_coding;
  m.critics = !ablate_gan;
  m.seed = seed;
  return m;
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "lambda_g") lambda_g = to_double(key, value);
  else if (key == "lambda_c") lambda_c = to_double(key, value);
  else if (key == "lambda_p") lambda_p = to_double(key, value);
  else if (key == "lambda_gp") lambda_gp = to_double(key, value);
  else if (key == "lambda_code") lambda_code = to_double(key, value);
  else if (key == "lr") lr = to_double(key, value);
  else if (key == "n_critic") n_critic = to_u64(key, value);
  else if (key == "batch") batch = to_u64(key, value);
  else if (key == "steps") steps = to_u64(key, value);
  else if (key == "pretrain_steps") pretrain_steps = to_u64(key, value);
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "reduction") reduction = parse_reduction(value);
  else if (key == "gp_mode") gp_mode = parse_gp_mode(value);
  else if (key == "optimizer") optimizer = parse_optimizer(value);
  else if (key == "nn_method") nn_method = parse_nn_method(value);
  else if (key == "d_r") d_r = to_u64(key, value);
  else if (key == "d_z") d_z = to_u64(key, value);
  else if (key == "points") points = to_u64(key, value);
  else if (key == "encoder_widths") encoder_widths = to_widths(key, value);
  else if (key == "decoder_widths") decoder_widths = to_widths(key, value);
  else if (key == "transfer_width") transfer_width = to_u64(key, value);
  else if (key == "critic_width") critic_width = to_u64(key, value);
  else if (key == "ablate_partial") ablate_partial = to_bool(key, value);
  else if (key == "ablate_gan") ablate_gan = to_bool(key, value);
  else if (key == "ablate_cycle") ablate_cycle = to_bool(key, value);
  else if (key == "ablate_coding") ablate_coding = to_bool(key, value);
  else if (key == "strategy") strategy = parse_strategy(value);
  else throw ValidationError("unknown config key '" + std::string(key) + "'");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "lambda_g = " << fmt_double(lambda_g) << "\n"
     << "lambda_c = " << fmt_double(lambda_c) << "\n"
     << "lambda_p = " << fmt_double(lambda_p) << "\n"
     << "lambda_gp = " << fmt_double(lambda_gp) << "\n"
     << "lambda_code = " << fmt_double(lambda_code) << "\n"
     << "lr = " << fmt_double(lr) << "\n"
     << "n_critic = " << n_critic << "\n"
     << "batch = " << batch << "\n"
     << "steps = " << steps << "\n"
     << "pretrain_steps = " << pretrain_steps << "\n"
     << "seed = " << seed << "\n"
     << "reduction = " << reduction_name(reduction) << "\n"
     << "gp_mode = " << gp_mode_name(gp_mode) << "\n"
     << "optimizer = " << optimizer_name(optimizer) << "\n"
     << "nn_method = " << nn_method_name(nn_method) << "\n"
     << "d_r = " << d_r << "\n"
     << "d_z = " << d_z << "\n"
     << "points = " << points << "\n"
     << "encoder_widths = " << fmt_widths(encoder_widths) << "\n"
     << "decoder_widths = " << fmt_widths(decoder_widths) << "\n"
     << "transfer_width = " << transfer_width << "\n"
     << "critic_width = " << critic_width << "\n"
     << "ablate_partial = " << b(ablate_partial) << "\n"
     << "ablate_gan = " << b(ablate_gan) << "\n"
     << "ablate_cycle = " << b(ablate_cycle) << "\n"
     << "ablate_coding = " << b(ablate_coding) << "\n"
     << "strategy = " << strategy_name(strategy) << "\n";
  return os.str();
}

std::vector<std::string> TrainConfig::apply_text(std::string_view text, std::string_view origin) {
  std::vector<std::string> keys;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(std::string(origin) + ": line " + std::to_string(line_no) +
                            ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    try {
      set(key, line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(origin) + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    keys.emplace_back(key);
  }
  return keys;
}

TrainConfig TrainConfig::from_text(std::string_view text, std::string_view origin) {
  TrainConfig c;
  c.apply_text(text, origin);
  return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  TrainConfig c;
  c.apply_file(path);
  return c;
}

std::vector<std::string> TrainConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return apply_text(os.str(), path.string());
}

void apply_ablation(TrainConfig& config, std::string_view name) {
  if (name == "partial") config.ablate_partial = true;
  else if (name == "gan") config.ablate_gan = true;
  else if (name == "cycle") config.ablate_cycle = true;
  else if (name == "coding") config.ablate_coding = true;
  else throw ValidationError("unknown ablation '" + std::string(name) + "' (partial|gan|cycle|coding)");
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

}  // namespace ucomp
