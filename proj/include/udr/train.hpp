#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udr/checkpoint.hpp"
#include "udr/image.hpp"
#include "udr/metrics.hpp"
#include "udr/model.hpp"
#include "udr/optim.hpp"

namespace udr::train {

struct TrainConfig {
  int epochs = 500;
  int max_steps = 0;  // when > 0, stops after this many optimizer steps
  int batch = 8;
  int patch = 768;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // steps between checkpoints; 0 = final only
  int val_interval = 0;         // steps between validation passes; 0 = off

  void validate(const model::ModelConfig& mc) const;
};

// Paired dataset laid out as root/rain/NNNNN.png + root/gt/NNNNN.png,
// matched by filename.
class Dataset {
 public:
  explicit Dataset(const std::string& root);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  image::ImagePair load(std::size_t i) const;

  // Keeps decoded pairs in memory when the estimated footprint allows it.
  void preload(std::size_t budget_bytes = std::size_t{512} << 20);

 private:
  std::string root_;
  std::vector<std::string> ids_;
  mutable std::vector<std::optional<image::ImagePair>> cache_;
};

// Same crop window and the same flip decisions applied to both images.
// Draw order: y, x, horizontal flip, vertical flip.
image::ImagePair sample_patch(const image::ImagePair& pair, std::int64_t size, Rng& rng);

struct TrainResult {
  std::int64_t steps = 0;
  std::vector<double> step_losses;       // loss per optimizer step (this run)
  std::vector<double> epoch_mean_loss;   // indexed by epoch
  std::string final_checkpoint;
};

// Runs (or resumes, when opt.step > 0) the training loop. Writes log.csv and
// checkpoints under out_dir; config_echo is stored in every checkpoint and in
// out_dir/config_resolved.txt. All stochastic draws are indexed by
// (seed, epoch) and (seed, step), so a resumed run splices bit-exactly.
template <typename T>
TrainResult train_model(model::UDRMixer<T>& m, AdamState<T>& opt, const TrainConfig& cfg,
                        Dataset& data, Dataset* val_data, const std::string& out_dir,
                        const std::string& config_echo);

// Whole-image forward: reflect-pads to a multiple of 2r, runs the model
// without gradients, crops back.
template <typename T>
Tensor<T> infer_full(const model::UDRMixer<T>& m, const Tensor<T>& img);

// Overlapping tiles blended by a normalized taper weight field. tile must be
// divisible by 2r; 0 <= overlap < tile/2. An image no larger than the tile is
// forwarded directly (bit-identical to infer_full).
template <typename T>
Tensor<T> tiled_inference(const model::UDRMixer<T>& m, const Tensor<T>& img, std::int64_t tile,
                          std::int64_t overlap);

// The normalized per-pixel blend weight field (sums to 1 by construction);
// exposed for verification.
Tensor<double> tile_weight_field(std::int64_t h, std::int64_t w, std::int64_t tile,
                                 std::int64_t overlap);

// Per-image PSNR/SSIM/MSE of filename-paired PNGs, then arithmetic means.
metrics::MetricsReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir,
                                     bool luminance_ssim = false);

// Mean PSNR of the model's derained outputs against ground truth.
template <typename T>
double validate_psnr(const model::UDRMixer<T>& m, Dataset& data);

}  // namespace udr::train
