#include "udr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace udr::train {

namespace {

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU64: return 8;
  }
  throw ArgumentError("unknown dtype code");
}

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

constexpr char kMagic[4] = {'U', 'D', 'R', 'M'};

}  // namespace

std::uint64_t CheckpointRecord::numel() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
CheckpointRecord CheckpointRecord::from_tensor(const std::string& name, const Tensor<T>& t) {
  CheckpointRecord rec;
  rec.name = name;
  rec.dtype = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
  const Shape4 s = t.shape();
  rec.dims = {static_cast<std::uint64_t>(s.b), static_cast<std::uint64_t>(s.c),
              static_cast<std::uint64_t>(s.h), static_cast<std::uint64_t>(s.w)};
  rec.raw.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
  std::memcpy(rec.raw.data(), t.data(), rec.raw.size());
  return rec;
}

CheckpointRecord CheckpointRecord::from_u64(const std::string& name,
                                            const std::vector<std::uint64_t>& v) {
  CheckpointRecord rec;
  rec.name = name;
  rec.dtype = DType::kU64;
  rec.dims = {static_cast<std::uint64_t>(v.size())};
  rec.raw.resize(v.size() * sizeof(std::uint64_t));
  std::memcpy(rec.raw.data(), v.data(), rec.raw.size());
  return rec;
}

template <typename T>
Tensor<T> CheckpointRecord::to_tensor() const {
  const DType want = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
  if (dtype != want) {
    throw std::runtime_error("checkpoint record " + name + ": dtype mismatch");
  }
  if (dims.size() != 4) {
    throw std::runtime_error("checkpoint record " + name + ": expected rank 4");
  }
  const Shape4 s{static_cast<std::int64_t>(dims[0]), static_cast<std::int64_t>(dims[1]),
                 static_cast<std::int64_t>(dims[2]), static_cast<std::int64_t>(dims[3])};
  Tensor<T> t(s);
  if (raw.size() != static_cast<std::size_t>(t.numel()) * sizeof(T)) {
    throw std::runtime_error("checkpoint record " + name + ": payload size mismatch");
  }
  std::memcpy(t.data(), raw.data(), raw.size());
  return t;
}

std::vector<std::uint64_t> CheckpointRecord::to_u64() const {
  if (dtype != DType::kU64) throw std::runtime_error("checkpoint record " + name + ": not u64");
  std::vector<std::uint64_t> v(raw.size() / sizeof(std::uint64_t));
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  write_pod(os, ckpt.version);
  write_pod(os, static_cast<std::uint32_t>(ckpt.config_text.size()));
  os.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  write_pod(os, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& rec : ckpt.records) {
    write_pod(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    write_pod(os, static_cast<std::uint8_t>(rec.dtype));
    write_pod(os, static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) write_pod(os, d);
    os.write(rec.raw.data(), static_cast<std::streamsize>(rec.raw.size()));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic (not a UDRM file): " + path);
  }
  Checkpoint ckpt;
  ckpt.version = read_pod<std::uint32_t>(is);
  if (ckpt.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ckpt.version));
  }
  const auto cfg_len = read_pod<std::uint32_t>(is);
  ckpt.config_text.resize(cfg_len);
  is.read(ckpt.config_text.data(), cfg_len);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  const auto count = read_pod<std::uint32_t>(is);
  ckpt.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const auto name_len = read_pod<std::uint32_t>(is);
    rec.name.resize(name_len);
    is.read(rec.name.data(), name_len);
    rec.dtype = static_cast<DType>(read_pod<std::uint8_t>(is));
    const auto rank = read_pod<std::uint8_t>(is);
    rec.dims.resize(rank);
    for (auto& d : rec.dims) d = read_pod<std::uint64_t>(is);
    rec.raw.resize(rec.numel() * dtype_size(rec.dtype));
    is.read(rec.raw.data(), static_cast<std::streamsize>(rec.raw.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

template <typename T>
Checkpoint make_training_checkpoint(const model::UDRMixer<T>& model, const AdamState<T>& opt,
                                    std::uint64_t seed, const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  const auto& items = model.params().items();
  for (const auto& [name, var] : items) {
    ckpt.records.push_back(CheckpointRecord::from_tensor(name, var.value()));
  }
  if (opt.initialized()) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      ckpt.records.push_back(CheckpointRecord::from_tensor("opt.m." + items[i].first, opt.m[i]));
      ckpt.records.push_back(CheckpointRecord::from_tensor("opt.v." + items[i].first, opt.v[i]));
    }
  }
  ckpt.records.push_back(
      CheckpointRecord::from_u64("opt.step", {static_cast<std::uint64_t>(opt.step)}));
  ckpt.records.push_back(CheckpointRecord::from_u64(
      "rng.state", {seed, static_cast<std::uint64_t>(opt.step)}));
  return ckpt;
}

template <typename T>
void apply_training_checkpoint(const Checkpoint& ckpt, model::UDRMixer<T>& model,
                               AdamState<T>* opt, std::uint64_t* seed_out) {
  auto& items = model.params().items();
  // Every model parameter must be present.
  for (auto& [name, var] : items) {
    const CheckpointRecord* rec = ckpt.find(name);
    if (!rec) throw std::runtime_error("checkpoint: missing parameter " + name);
    Tensor<T> t = rec->template to_tensor<T>();
    if (!(t.shape() == var.value().shape())) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    var.value() = std::move(t);
  }
  // Every stored parameter-like record must be known to the model.
  for (const auto& rec : ckpt.records) {
    if (rec.name == "opt.step" || rec.name == "rng.state") continue;
    std::string base = rec.name;
    if (base.rfind("opt.m.", 0) == 0) base = base.substr(6);
    else if (base.rfind("opt.v.", 0) == 0) base = base.substr(6);
    if (model.params().find(base) == nullptr) {
      throw std::runtime_error("checkpoint: unknown parameter " + rec.name);
    }
  }
  if (opt) {
    opt->init(model.params());
    bool any = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const CheckpointRecord* rm = ckpt.find("opt.m." + items[i].first);
      const CheckpointRecord* rv = ckpt.find("opt.v." + items[i].first);
      if (rm && rv) {
        opt->m[i] = rm->template to_tensor<T>();
        opt->v[i] = rv->template to_tensor<T>();
        any = true;
      }
    }
    if (const CheckpointRecord* rs = ckpt.find("opt.step")) {
      opt->step = static_cast<std::int64_t>(rs->to_u64().at(0));
    } else if (any) {
      throw std::runtime_error("checkpoint: optimizer moments present but opt.step missing");
    }
  }
  if (seed_out) {
    if (const CheckpointRecord* rr = ckpt.find("rng.state")) {
      *seed_out = rr->to_u64().at(0);
    }
  }
}

template CheckpointRecord CheckpointRecord::from_tensor<float>(const std::string&,
                                                               const Tensor<float>&);
template CheckpointRecord CheckpointRecord::from_tensor<double>(const std::string&,
                                                                const Tensor<double>&);
template Tensor<float> CheckpointRecord::to_tensor<float>() const;
template Tensor<double> CheckpointRecord::to_tensor<double>() const;
template Checkpoint make_training_checkpoint<float>(const model::UDRMixer<float>&,
                                                    const AdamState<float>&, std::uint64_t,
                                                    const std::string&);
template Checkpoint make_training_checkpoint<double>(const model::UDRMixer<double>&,
                                                     const AdamState<double>&, std::uint64_t,
                                                     const std::string&);
template void apply_training_checkpoint<float>(const Checkpoint&, model::UDRMixer<float>&,
                                               AdamState<float>*, std::uint64_t*);
template void apply_training_checkpoint<double>(const Checkpoint&, model::UDRMixer<double>&,
                                                AdamState<double>*, std::uint64_t*);

}  // namespace udr::train
