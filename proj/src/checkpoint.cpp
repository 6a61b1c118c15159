#include "ucomp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ucomp/error.hpp"

namespace ucomp {
namespace {

constexpr char kMagic[4] = {'C', '4', 'C', '1'};

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    v = to_le(v);
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void text(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void record(const CheckpointRecord& r) {
    if (r.name.size() > 0xFFFF) throw ValidationError("record name too long: " + r.name);
    put(static_cast<std::uint16_t>(r.name.size()));
    bytes(r.name);
    put(static_cast<std::uint8_t>(r.value.rank()));
    for (std::size_t d : r.value.shape()) put(static_cast<std::uint32_t>(d));
    for (double v : r.value.data()) {
      std::uint64_t u;
      std::memcpy(&u, &v, sizeof u);
      put(u);
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string_view origin) : data_(data), origin_(origin) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_le(v);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return std::string(bytes(get<std::uint32_t>())); }
  CheckpointRecord record() {
    CheckpointRecord r;
    r.name = std::string(bytes(get<std::uint16_t>()));
    const auto ndim = get<std::uint8_t>();
    if (ndim == 0) fail("record " + r.name + " has rank 0");
    Shape shape;
    for (std::uint8_t i = 0; i < ndim; ++i) {
      const auto d = get<std::uint32_t>();
      if (d == 0) fail("record " + r.name + " has a zero extent");
      shape.push_back(d);
    }
    const std::size_t n = shape_size(shape);
    if (n > (data_.size() - pos_) / 8) fail("truncated payload of " + r.name);
    std::vector<double> values(n);
    for (double& v : values) {
      const auto u = get<std::uint64_t>();
      std::memcpy(&v, &u, sizeof v);
    }
    r.value = Tensor(std::move(shape), std::move(values));
    return r;
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(std::string(origin_) + ": " + what + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) fail("truncated checkpoint");
  }
  std::string_view data_;
  std::string_view origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint capture(const Trainer& trainer) {
  Checkpoint c;
  c.step = trainer.steps_done();
  c.rng_state = trainer.rng().serialize();
  c.config_text = trainer.config().to_text();
  for (const Parameter* p : trainer.networks().parameters()) c.parameters.push_back({p->id, p->value});
  for (const auto& [id, m] : trainer.optimizer().moments()) {
    c.moments.push_back({id + "/m1", m.m1});
    c.moments.push_back({id + "/m2", m.m2});
    c.moments.push_back({id + "/t", Tensor::scalar(static_cast<double>(m.t))});
  }
  return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.put(c.version);
  w.put(c.step);
  w.text(c.rng_state);
  w.text(c.config_text);
  w.put(static_cast<std::uint32_t>(c.parameters.size()));
  for (const auto& r : c.parameters) w.record(r);
  w.put(static_cast<std::uint32_t>(c.moments.size()));
  for (const auto& r : c.moments) w.record(r);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, std::string_view origin) {
  Reader r(bytes, origin);
  if (r.bytes(4) != std::string_view(kMagic, 4)) r.fail("bad magic, not a checkpoint");
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(c.version));
  c.step = r.get<std::uint64_t>();
  c.rng_state = r.text();
  c.config_text = r.text();
  for (auto* list : {&c.parameters, &c.moments}) {
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) list->push_back(r.record());
  }
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  const std::string bytes = encode_checkpoint(capture(trainer));
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return decode_checkpoint(os.str(), path.string());
}

void restore_checkpoint(const Checkpoint& c, Trainer& trainer) {
  NetworkBundle& nets = trainer.networks();
  auto params = nets.parameters();
  if (c.parameters.size() != params.size()) {
    throw ValidationError("checkpoint has " + std::to_string(c.parameters.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  }
  std::map<std::string, const Tensor*> by_name;
  for (const auto& r : c.parameters) by_name[r.name] = &r.value;
  for (const Parameter* p : params) {
    auto it = by_name.find(p->id);
    if (it == by_name.end()) throw ValidationError("checkpoint lacks parameter " + p->id);
    if (it->second->shape() != p->value.shape()) {
      throw ValidationError("checkpoint parameter " + p->id + " has shape " +
                            shape_str(it->second->shape()) + ", model expects " +
                            shape_str(p->value.shape()));
    }
  }

  std::map<std::string, Moments> moments;
  std::map<std::string, int> seen;
  for (const auto& r : c.moments) {
    const auto slash = r.name.rfind('/');
    if (slash == std::string::npos) throw ValidationError("bad moment record name " + r.name);
    const std::string id = r.name.substr(0, slash), kind = r.name.substr(slash + 1);
    Parameter* p = nets.find(id);
    if (p == nullptr) throw ValidationError("moment record for unknown parameter " + id);
    Moments& m = moments[id];
    if (kind == "m1" || kind == "m2") {
      if (r.value.shape() != p->value.shape()) throw ValidationError("moment shape mismatch for " + r.name);
      (kind == "m1" ? m.m1 : m.m2) = r.value;
    } else if (kind == "t") {
      if (r.value.size() != 1 || r.value[0] < 1) throw ValidationError("bad step count in " + r.name);
      m.t = static_cast<std::uint64_t>(r.value[0]);
    } else {
      throw ValidationError("unknown moment record " + r.name);
    }
    ++seen[id];
  }
  for (const auto& [id, n] : seen)
    if (n != 3) throw ValidationError("incomplete optimizer state for " + id);
  Rng rng = Rng::deserialize(c.rng_state);

  for (Parameter* p : params) p->value = *by_name.at(p->id);
  trainer.optimizer().set_moments(std::move(moments));
  trainer.restore(c.step, std::move(rng));
}

void load_checkpoint(const std::filesystem::path& path, Trainer& trainer) {
  restore_checkpoint(read_checkpoint(path), trainer);
}

NetworkBundle load_networks(const Checkpoint& c) {
  const TrainConfig config = c.config();
  NetworkBundle nets(config.model_config());
  auto params = nets.parameters();
  if (params.size() != c.parameters.size()) throw ValidationError("checkpoint does not match its config");
  std::map<std::string, const Tensor*> by_name;
  for (const auto& r : c.parameters) by_name[r.name] = &r.value;
  for (Parameter* p : params) {
    auto it = by_name.find(p->id);
    if (it == by_name.end() || it->second->shape() != p->value.shape()) {
      throw ValidationError("checkpoint parameter " + p->id + " missing or misshapen");
    }
    p->value = *it->second;
  }
  return nets;
}

}  // namespace ucomp
