#include "udr/model.hpp"

#include <cmath>

namespace udr::model {

void ModelConfig::validate() const {
  if (n1 < 1 || n2 < 1 || n3 < 1) throw ArgumentError("ModelConfig: block counts must be >= 1");
  if (c_main < 1 || c_aux < 1) throw ArgumentError("ModelConfig: channel widths must be >= 1");
  if (unshuffle != 2 && unshuffle != 4) throw ArgumentError("ModelConfig: unshuffle must be 2 or 4");
  if (sfrl_stages < 1 || sfrl_stages > 3) throw ArgumentError("ModelConfig: sfrl_stages must be 1..3");
  if (sfrl_cube < 0) throw ArgumentError("ModelConfig: sfrl_cube must be >= 0");
  if (ffl_expand < 1) throw ArgumentError("ModelConfig: ffl_expand must be >= 1");
  if (aux_blocks < 0) throw ArgumentError("ModelConfig: aux_blocks must be >= 0");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.n1 = 1;
  c.n2 = 1;
  c.n3 = 2;
  c.c_main = 16;
  c.c_aux = 16;
  c.unshuffle = 2;
  c.sfrl_cube = 16;
  return c;
}

template <typename T>
nn::Var<T> ParamRegistry<T>::add(const std::string& name, Tensor<T> init) {
  if (index_.count(name) != 0) throw ArgumentError("duplicate parameter name: " + name);
  nn::Var<T> v(std::move(init), /*requires_grad=*/true);
  index_.emplace(name, items_.size());
  items_.emplace_back(name, v);
  return v;
}

template <typename T>
nn::Var<T>* ParamRegistry<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second].second;
}

template <typename T>
std::int64_t ParamRegistry<T>::total_params() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : items_) n += v.value().numel();
  return n;
}

template <typename T>
void ParamRegistry<T>::zero_grads() {
  for (auto& [name, v] : items_) v.zero_grad();
}

namespace {

template <typename T>
Tensor<T> uniform_init(Rng& rng, Shape4 shape, double bound) {
  Tensor<T> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

// SFRL mixing dimension for stage i: the leading axis after i rotations of
// the (C,S,S) cube.
std::int64_t sfrl_stage_dim(std::int64_t c, std::int64_t s, int stage) {
  return stage == 0 ? c : s;
}

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                            std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                            std::int64_t stride_in, nn::Pad pad_in)
    : stride(stride_in), pad(pad_in) {
  if (k != 1 && k != 3) throw ArgumentError("model conv layers use k in {1,3}, got " + std::to_string(k));
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
  w = reg.add(name + ".w", uniform_init<T>(rng, Shape4{c_out, c_in, k, k}, bound));
  b = reg.add(name + ".b", uniform_init<T>(rng, Shape4{1, c_out, 1, 1}, bound));
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(ParamRegistry<T>& reg, const std::string& name, std::int64_t c) {
  gamma = reg.add(name + ".gamma", Tensor<T>::full(Shape4{1, c, 1, 1}, T(1)));
  beta = reg.add(name + ".beta", Tensor<T>(Shape4{1, c, 1, 1}));
}

template <typename T>
SfrlLayer<T>::SfrlLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                        std::int64_t channels_in, const ModelConfig& cfg)
    : form(cfg.sfrl_form), stages(cfg.sfrl_stages), channels(channels_in) {
  cube = cfg.sfrl_cube == 0 ? channels : cfg.sfrl_cube;
  if (form == SfrlForm::kParallelSum && cube != channels) {
    throw ArgumentError("SFRL parallel-sum form requires cube size S == channels C (S=" +
                        std::to_string(cube) + ", C=" + std::to_string(channels) + ")");
  }
  mixes.reserve(static_cast<std::size_t>(stages));
  for (int i = 0; i < stages; ++i) {
    const bool is_gate = i == stages - 1;
    const std::int64_t dim = form == SfrlForm::kParallelSum
                                 ? channels
                                 : sfrl_stage_dim(channels, cube, i);
    const std::string mix_name = name + (is_gate ? ".gate" : ".mix" + std::to_string(i));
    mixes.emplace_back(reg, mix_name, rng, dim, dim, 1, 1, nn::Pad::kSame);
  }
}

template <typename T>
nn::Var<T> SfrlLayer<T>::forward(const nn::Var<T>& x) const {
  const Shape4 s = x.shape();
  if (s.c != channels) {
    throw ShapeError("SFRL built for C=" + std::to_string(channels) + ", got " +
                     std::to_string(s.c));
  }
  nn::Var<T> f = nn::interpolate_bilinear(x, cube, cube);
  nn::Var<T> g;
  if (form == SfrlForm::kSequential) {
    g = f;
    for (int i = 0; i < stages; ++i) {
      g = mixes[static_cast<std::size_t>(i)].forward(g);
      g = nn::activation(g, i == stages - 1 ? nn::Act::kSigmoid : nn::Act::kGelu);
      g = nn::rotate_axes(g);
    }
    for (int i = stages; i < 3; ++i) g = nn::rotate_axes(g);  // restore orientation
  } else {
    g = f;
    for (int i = 0; i + 1 < stages; ++i) {
      g = nn::rotate_axes(nn::activation(mixes[static_cast<std::size_t>(i)].forward(g),
                                         nn::Act::kGelu));
    }
    nn::Var<T> gate = nn::rotate_axes(
        nn::activation(mixes[static_cast<std::size_t>(stages - 1)].forward(f), nn::Act::kSigmoid));
    g = stages >= 2 ? nn::add(g, gate) : gate;
  }
  nn::Var<T> back = nn::interpolate_bilinear(g, s.h, s.w);
  return nn::mul(back, x);
}

template <typename T>
FflLayer<T>::FflLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                      std::int64_t channels, int expand_factor) {
  const std::int64_t hidden = channels * expand_factor;
  expand = Conv2dLayer<T>(reg, name + ".expand", rng, channels, hidden, 3, 1, nn::Pad::kSame);
  reduce = Conv2dLayer<T>(reg, name + ".reduce", rng, hidden, channels, 1, 1, nn::Pad::kSame);
}

template <typename T>
nn::Var<T> FflLayer<T>::forward(const nn::Var<T>& x) const {
  return reduce.forward(nn::activation(expand.forward(x), nn::Act::kGelu));
}

template <typename T>
FfmlLayer<T>::FfmlLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                        std::int64_t channels) {
  mix_a = Conv2dLayer<T>(reg, name + ".mix_a", rng, 2 * channels, 2 * channels, 1, 1,
                         nn::Pad::kSame);
  mix_b = Conv2dLayer<T>(reg, name + ".mix_b", rng, 2 * channels, 2 * channels, 1, 1,
                         nn::Pad::kSame);
}

template <typename T>
nn::Var<T> FfmlLayer<T>::forward(const nn::Var<T>& x) const {
  nn::Var<T> z = nn::fft2_to_channels(x);
  z = mix_a.forward(z);
  z = nn::activation(z, nn::Act::kRelu);
  z = mix_b.forward(z);
  nn::Var<T> f = nn::ifft2_real_from_channels(z);
  return nn::mul(f, x);
}

template <typename T>
SfmbBlock<T>::SfmbBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                        std::int64_t channels, const ModelConfig& cfg) {
  norm1 = LayerNormLayer<T>(reg, name + ".norm1", channels);
  sfrl = SfrlLayer<T>(reg, name + ".sfrl", rng, channels, cfg);
  norm2 = LayerNormLayer<T>(reg, name + ".norm2", channels);
  ffl = FflLayer<T>(reg, name + ".ffl", rng, channels, cfg.ffl_expand);
}

template <typename T>
nn::Var<T> SfmbBlock<T>::forward(const nn::Var<T>& x) const {
  nn::Var<T> mid = nn::add(x, sfrl.forward(norm1.forward(x)));
  return nn::add(mid, ffl.forward(norm2.forward(mid)));
}

template <typename T>
FfmbBlock<T>::FfmbBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                        std::int64_t channels, const ModelConfig& cfg) {
  norm1 = LayerNormLayer<T>(reg, name + ".norm1", channels);
  ffml = FfmlLayer<T>(reg, name + ".ffml", rng, channels);
  norm2 = LayerNormLayer<T>(reg, name + ".norm2", channels);
  ffl = FflLayer<T>(reg, name + ".ffl", rng, channels, cfg.ffl_expand);
}

template <typename T>
nn::Var<T> FfmbBlock<T>::forward(const nn::Var<T>& x) const {
  nn::Var<T> mid = nn::add(x, ffml.forward(norm1.forward(x)));
  return nn::add(mid, ffl.forward(norm2.forward(mid)));
}

template <typename T>
UDRMixer<T>::UDRMixer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(hash_u64(seed ^ 0x7564726d69786572ULL));
  const std::int64_t cm = cfg_.c_main;
  const std::int64_t ca = cfg_.c_aux;
  const std::int64_t r = cfg_.unshuffle;
  const std::int64_t c2 = cm * kLevel2Mult;

  embed_ = Conv2dLayer<T>(params_, "main.embed", rng, 3, cm, 3, 1, nn::Pad::kSame);
  proj_ = Conv2dLayer<T>(params_, "main.proj", rng, cm * r * r, cm, 1, 1, nn::Pad::kSame);
  for (int i = 0; i < cfg_.n1; ++i) {
    enc1_.emplace_back(params_, "main.enc1." + std::to_string(i), rng, cm, cfg_);
  }
  down_ = Conv2dLayer<T>(params_, "main.down", rng, cm, c2, 3, 2, nn::Pad::kSame);
  for (int i = 0; i < cfg_.n2; ++i) {
    enc2_.emplace_back(params_, "main.enc2." + std::to_string(i), rng, c2, cfg_);
  }
  up_ = Conv2dLayer<T>(params_, "main.up", rng, c2, cm * 4, 3, 1, nn::Pad::kSame);
  const std::int64_t fuse_in = cfg_.aux_full_res ? ca * r * r : ca;
  fuse_ = Conv2dLayer<T>(params_, "main.fuse", rng, fuse_in, cm, 1, 1, nn::Pad::kSame);
  for (int i = 0; i < cfg_.n3; ++i) {
    dec_.emplace_back(params_, "main.dec." + std::to_string(i), rng, cm, cfg_);
  }
  tail_ = Conv2dLayer<T>(params_, "main.tail", rng, cm, 3 * r * r, 3, 1, nn::Pad::kSame);

  aux_embed_ = Conv2dLayer<T>(params_, "aux.embed", rng, 3, ca, 3, 1, nn::Pad::kSame);
  if (!cfg_.aux_full_res) {
    aux_proj_ = Conv2dLayer<T>(params_, "aux.proj", rng, ca * r * r, ca, 1, 1, nn::Pad::kSame);
  }
  for (int i = 0; i < cfg_.aux_block_count(); ++i) {
    aux_.emplace_back(params_, "aux.block." + std::to_string(i), rng, ca, cfg_);
  }
}

template <typename T>
nn::Var<T> UDRMixer<T>::forward(const nn::Var<T>& input) const {
  const Shape4 s = input.shape();
  if (s.c != 3) throw ShapeError("model expects 3 input channels, got " + std::to_string(s.c));
  const std::int64_t need = 2 * cfg_.unshuffle;
  if (s.h % need != 0 || s.w % need != 0) {
    throw ShapeError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by " + std::to_string(need) +
                     " (2 * unshuffle factor)");
  }
  const std::int64_t r = cfg_.unshuffle;

  nn::Var<T> m = proj_.forward(nn::pixel_unshuffle(embed_.forward(input), r));
  for (const auto& blk : enc1_) m = blk.forward(m);
  nn::Var<T> skip = m;
  m = down_.forward(m);
  for (const auto& blk : enc2_) m = blk.forward(m);
  m = nn::pixel_shuffle(up_.forward(m), 2);
  m = nn::add(m, skip);

  nn::Var<T> a = aux_embed_.forward(input);
  if (!cfg_.aux_full_res) a = aux_proj_.forward(nn::pixel_unshuffle(a, r));
  for (const auto& blk : aux_) a = blk.forward(a);
  if (cfg_.aux_full_res) a = nn::pixel_unshuffle(a, r);
  m = nn::add(m, fuse_.forward(a));

  for (const auto& blk : dec_) m = blk.forward(m);
  return nn::pixel_shuffle(tail_.forward(m), r);
}

template <typename T>
Tensor<T> UDRMixer<T>::infer(const Tensor<T>& input) const {
  nn::NoGradGuard ng;
  nn::Var<T> x(input);
  return forward(x).value();
}

// --- complexity accounting ----------------------------------------------

namespace {

struct CostAcc {
  ComplexityReport report;

  void item(const std::string& name, std::int64_t params, std::int64_t flops) {
    report.layers.push_back({name, params, flops});
    report.total_params += params;
    report.total_flops += flops;
  }
  void conv(const std::string& name, std::int64_t ci, std::int64_t co, std::int64_t k,
            std::int64_t ho, std::int64_t wo) {
    item(name, co * ci * k * k + co, 2 * ci * co * k * k * ho * wo);
  }
  void norm(const std::string& name, std::int64_t c, std::int64_t h, std::int64_t w) {
    item(name, 2 * c, 8 * c * h * w);
  }
  void act(const std::string& name, nn::Act kind, std::int64_t n) {
    const std::int64_t per = kind == nn::Act::kGelu ? 14 : (kind == nn::Act::kSigmoid ? 4 : 1);
    item(name, 0, per * n);
  }
  void fft(const std::string& name, std::int64_t c, std::int64_t h, std::int64_t w) {
    const double l2 = std::log2(static_cast<double>(h * w));
    item(name, 0, static_cast<std::int64_t>(5.0 * static_cast<double>(h * w) * l2) * c);
  }
  void resize(const std::string& name, std::int64_t c, std::int64_t ho, std::int64_t wo) {
    item(name, 0, 8 * c * ho * wo);
  }
  void elem(const std::string& name, std::int64_t n) { item(name, 0, n); }
};

void describe_sfrl(CostAcc& acc, const std::string& name, const ModelConfig& cfg, std::int64_t c,
                   std::int64_t h, std::int64_t w) {
  const std::int64_t s = cfg.sfrl_cube == 0 ? c : cfg.sfrl_cube;
  acc.resize(name + ".resize_in", c, s, s);
  // Track the cube orientation (d0 leading/mixed axis).
  std::int64_t d[3] = {c, s, s};
  auto rotate = [&]() {
    const std::int64_t t = d[0];
    d[0] = d[1];
    d[1] = d[2];
    d[2] = t;
  };
  const bool parallel = cfg.sfrl_form == SfrlForm::kParallelSum;
  for (int i = 0; i < cfg.sfrl_stages; ++i) {
    const bool is_gate = i == cfg.sfrl_stages - 1;
    std::int64_t dim = d[0];
    if (parallel && is_gate) dim = c;  // gate reads the unrotated cube
    const std::string mix_name = name + (is_gate ? ".gate" : ".mix" + std::to_string(i));
    acc.conv(mix_name, dim, dim, 1, d[1] * d[2], 1);
    acc.act(mix_name + ".act", is_gate ? nn::Act::kSigmoid : nn::Act::kGelu, d[0] * d[1] * d[2]);
    if (!parallel || !is_gate) rotate();
  }
  if (parallel && cfg.sfrl_stages >= 2) acc.elem(name + ".combine", c * s * s);
  acc.resize(name + ".resize_out", c, h, w);
  acc.elem(name + ".gate_mul", c * h * w);
}

void describe_ffl(CostAcc& acc, const std::string& name, const ModelConfig& cfg, std::int64_t c,
                  std::int64_t h, std::int64_t w) {
  const std::int64_t hidden = c * cfg.ffl_expand;
  acc.conv(name + ".expand", c, hidden, 3, h, w);
  acc.act(name + ".act", nn::Act::kGelu, hidden * h * w);
  acc.conv(name + ".reduce", hidden, c, 1, h, w);
}

void describe_ffml(CostAcc& acc, const std::string& name, std::int64_t c, std::int64_t h,
                   std::int64_t w) {
  acc.fft(name + ".fft", c, h, w);
  acc.conv(name + ".mix_a", 2 * c, 2 * c, 1, h, w);
  acc.act(name + ".act", nn::Act::kRelu, 2 * c * h * w);
  acc.conv(name + ".mix_b", 2 * c, 2 * c, 1, h, w);
  acc.fft(name + ".ifft", c, h, w);
  acc.elem(name + ".gate_mul", c * h * w);
}

void describe_sfmb(CostAcc& acc, const std::string& name, const ModelConfig& cfg, std::int64_t c,
                   std::int64_t h, std::int64_t w) {
  acc.norm(name + ".norm1", c, h, w);
  describe_sfrl(acc, name + ".sfrl", cfg, c, h, w);
  acc.elem(name + ".residual1", c * h * w);
  acc.norm(name + ".norm2", c, h, w);
  describe_ffl(acc, name + ".ffl", cfg, c, h, w);
  acc.elem(name + ".residual2", c * h * w);
}

void describe_ffmb(CostAcc& acc, const std::string& name, const ModelConfig& cfg, std::int64_t c,
                   std::int64_t h, std::int64_t w) {
  acc.norm(name + ".norm1", c, h, w);
  describe_ffml(acc, name + ".ffml", c, h, w);
  acc.elem(name + ".residual1", c * h * w);
  acc.norm(name + ".norm2", c, h, w);
  describe_ffl(acc, name + ".ffl", cfg, c, h, w);
  acc.elem(name + ".residual2", c * h * w);
}

}  // namespace

ComplexityReport describe_complexity(const ModelConfig& cfg, std::int64_t h, std::int64_t w) {
  cfg.validate();
  const std::int64_t need = 2 * cfg.unshuffle;
  if (h % need != 0 || w % need != 0) {
    throw ShapeError("complexity: input dims must be divisible by " + std::to_string(need));
  }
  CostAcc acc;
  const std::int64_t cm = cfg.c_main;
  const std::int64_t ca = cfg.c_aux;
  const std::int64_t r = cfg.unshuffle;
  const std::int64_t c2 = cm * 2;  // matches UDRMixer::kLevel2Mult
  const std::int64_t h1 = h / r, w1 = w / r;
  const std::int64_t h2 = h1 / 2, w2 = w1 / 2;

  acc.conv("main.embed", 3, cm, 3, h, w);
  acc.conv("main.proj", cm * r * r, cm, 1, h1, w1);
  for (int i = 0; i < cfg.n1; ++i) {
    describe_sfmb(acc, "main.enc1." + std::to_string(i), cfg, cm, h1, w1);
  }
  acc.conv("main.down", cm, c2, 3, h2, w2);
  for (int i = 0; i < cfg.n2; ++i) {
    describe_sfmb(acc, "main.enc2." + std::to_string(i), cfg, c2, h2, w2);
  }
  acc.conv("main.up", c2, cm * 4, 3, h2, w2);
  acc.elem("main.skip_add", cm * h1 * w1);
  const std::int64_t fuse_in = cfg.aux_full_res ? ca * r * r : ca;
  acc.conv("main.fuse", fuse_in, cm, 1, h1, w1);
  acc.elem("main.fuse_add", cm * h1 * w1);
  for (int i = 0; i < cfg.n3; ++i) {
    describe_sfmb(acc, "main.dec." + std::to_string(i), cfg, cm, h1, w1);
  }
  acc.conv("main.tail", cm, 3 * r * r, 3, h1, w1);

  acc.conv("aux.embed", 3, ca, 3, h, w);
  const std::int64_t ha = cfg.aux_full_res ? h : h1;
  const std::int64_t wa = cfg.aux_full_res ? w : w1;
  if (!cfg.aux_full_res) acc.conv("aux.proj", ca * r * r, ca, 1, h1, w1);
  for (int i = 0; i < cfg.aux_block_count(); ++i) {
    describe_ffmb(acc, "aux.block." + std::to_string(i), cfg, ca, ha, wa);
  }
  return acc.report;
}

std::int64_t count_params(const ModelConfig& cfg) {
  return describe_complexity(cfg, 2 * cfg.unshuffle, 2 * cfg.unshuffle).total_params;
}

std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t h, std::int64_t w) {
  return describe_complexity(cfg, h, w).total_flops;
}

#define UDR_INSTANTIATE_MODEL(T)     \
  template class ParamRegistry<T>;   \
  template struct Conv2dLayer<T>;    \
  template struct LayerNormLayer<T>; \
  template struct SfrlLayer<T>;      \
  template struct FflLayer<T>;       \
  template struct FfmlLayer<T>;      \
  template struct SfmbBlock<T>;      \
  template struct FfmbBlock<T>;      \
  template class UDRMixer<T>;

UDR_INSTANTIATE_MODEL(float)
UDR_INSTANTIATE_MODEL(double)

#undef UDR_INSTANTIATE_MODEL

}  // namespace udr::model
