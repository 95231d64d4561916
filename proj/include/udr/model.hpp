#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "udr/autograd.hpp"
#include "udr/rng.hpp"

namespace udr::model {

// How the SFRL stages are combined. kSequential chains mix->act->rotate and
// pads the rotation count to three so the output returns to the input
// orientation; it is valid for any cube size. kParallelSum adds the
// twice-rotated GELU chain to the once-rotated sigmoid path and therefore
// requires the cube side to equal the channel count.
enum class SfrlForm { kSequential, kParallelSum };

struct ModelConfig {
  int n1 = 2;
  int n2 = 2;
  int n3 = 4;
  int c_main = 48;
  int c_aux = 64;
  int unshuffle = 4;     // initial pixel-unshuffle factor, 2 or 4
  int sfrl_cube = 384;   // S; 0 selects the block's channel count
  int sfrl_stages = 3;   // 1..3
  int ffl_expand = 2;
  SfrlForm sfrl_form = SfrlForm::kSequential;
  int aux_blocks = 0;        // FFMB count; 0 selects n3
  bool aux_full_res = false; // run FFMBs at full resolution instead of H/r

  void validate() const;
  int aux_block_count() const { return aux_blocks > 0 ? aux_blocks : n3; }

  // Desk-scale configuration used throughout the tests.
  static ModelConfig toy();
};

// Named parameter store. Registration order is the stable serialization order.
template <typename T>
class ParamRegistry {
 public:
  nn::Var<T> add(const std::string& name, Tensor<T> init);
  nn::Var<T>* find(const std::string& name);
  const std::vector<std::pair<std::string, nn::Var<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, nn::Var<T>>>& items() { return items_; }
  std::int64_t total_params() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, nn::Var<T>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct Conv2dLayer {
  nn::Var<T> w, b;
  std::int64_t stride = 1;
  nn::Pad pad = nn::Pad::kSame;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t c_in,
              std::int64_t c_out, std::int64_t k, std::int64_t stride, nn::Pad pad);
  nn::Var<T> forward(const nn::Var<T>& x) const { return nn::conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct LayerNormLayer {
  nn::Var<T> gamma, beta;
  T eps = static_cast<T>(1e-6);

  LayerNormLayer() = default;
  LayerNormLayer(ParamRegistry<T>& reg, const std::string& name, std::int64_t c);
  nn::Var<T> forward(const nn::Var<T>& x) const { return nn::layer_norm(x, gamma, beta, eps); }
};

// Spatial feature rearrangement: interpolate to an SxS cube, run the
// configured mixing stages across rotated axis views, sigmoid-gate, then
// interpolate back and multiply with the input.
template <typename T>
struct SfrlLayer {
  SfrlForm form = SfrlForm::kSequential;
  int stages = 3;
  std::int64_t channels = 0;
  std::int64_t cube = 0;
  std::vector<Conv2dLayer<T>> mixes;  // stages entries; the last one gates

  SfrlLayer() = default;
  SfrlLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t channels,
            const ModelConfig& cfg);
  nn::Var<T> forward(const nn::Var<T>& x) const;
};

// 3x3 expansion -> GELU -> 1x1 reduction.
template <typename T>
struct FflLayer {
  Conv2dLayer<T> expand, reduce;

  FflLayer() = default;
  FflLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t channels,
           int expand_factor);
  nn::Var<T> forward(const nn::Var<T>& x) const;
};

// FFT -> channel-stacked mixing (2C) -> ReLU -> mixing -> inverse FFT (real
// part) -> multiplicative gate with the input.
template <typename T>
struct FfmlLayer {
  Conv2dLayer<T> mix_a, mix_b;

  FfmlLayer() = default;
  FfmlLayer(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t channels);
  nn::Var<T> forward(const nn::Var<T>& x) const;
};

// Pre-norm residual pair: x' = x + Layer(LN(x)); out = x' + FFL(LN(x')).
template <typename T>
struct SfmbBlock {
  LayerNormLayer<T> norm1, norm2;
  SfrlLayer<T> sfrl;
  FflLayer<T> ffl;

  SfmbBlock() = default;
  SfmbBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t channels,
            const ModelConfig& cfg);
  nn::Var<T> forward(const nn::Var<T>& x) const;
};

template <typename T>
struct FfmbBlock {
  LayerNormLayer<T> norm1, norm2;
  FfmlLayer<T> ffml;
  FflLayer<T> ffl;

  FfmbBlock() = default;
  FfmbBlock(ParamRegistry<T>& reg, const std::string& name, Rng& rng, std::int64_t channels,
            const ModelConfig& cfg);
  nn::Var<T> forward(const nn::Var<T>& x) const;
};

// Dual-branch UHD deraining network. The main branch works at 1/r resolution
// behind a lossless pixel-unshuffle; the auxiliary FFMB branch feeds the
// decoder. Input (B,3,H,W) with H,W divisible by 2r; output matches the input
// shape.
template <typename T>
class UDRMixer {
 public:
  UDRMixer(const ModelConfig& cfg, std::uint64_t seed);

  nn::Var<T> forward(const nn::Var<T>& input) const;
  Tensor<T> infer(const Tensor<T>& input) const;  // no-grad forward

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<T>& params() { return params_; }
  const ParamRegistry<T>& params() const { return params_; }
  std::int64_t param_count() const { return params_.total_params(); }

 private:
  ModelConfig cfg_;
  ParamRegistry<T> params_;
  Conv2dLayer<T> embed_, proj_, down_, up_, fuse_, tail_;
  Conv2dLayer<T> aux_embed_, aux_proj_;
  std::vector<SfmbBlock<T>> enc1_, enc2_, dec_;
  std::vector<FfmbBlock<T>> aux_;

  // The level-2 width multiplier applied across the 2x downsample.
  static constexpr int kLevel2Mult = 2;
};

// --- complexity accounting ----------------------------------------------
// FLOP conventions: conv = 2*Ci*Co*k^2*Ho*Wo; fft/ifft = 5*H*W*log2(H*W) per
// channel; layer norm = 8 per element; GELU/ReLU/Sigmoid = 14/1/4 per
// element; interpolation = 8 per output element; elementwise add/mul = 1 per
// element; pure data movement (rotate, pixel shuffle) = 0. Batch size 1.

struct LayerCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
};

// Structural walk of the architecture at spatial size HxW (batch 1).
ComplexityReport describe_complexity(const ModelConfig& cfg, std::int64_t h, std::int64_t w);

std::int64_t count_params(const ModelConfig& cfg);
std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t h, std::int64_t w);

}  // namespace udr::model
