#include "udr/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "udr/kernels.hpp"

namespace fs = std::filesystem;

namespace udr::train {

namespace {
constexpr std::uint64_t kTagPerm = 0x7065726dULL;   // epoch permutations
constexpr std::uint64_t kTagPatch = 0x70617463ULL;  // per-sample patch draws
}  // namespace

void TrainConfig::validate(const model::ModelConfig& mc) const {
  if (batch < 1) throw ArgumentError("train: batch must be >= 1");
  if (epochs < 1 && max_steps < 1) throw ArgumentError("train: epochs or max_steps must be >= 1");
  const int need = 2 * mc.unshuffle;
  if (patch < need || patch % need != 0) {
    throw ArgumentError("train: patch size must be a positive multiple of " +
                        std::to_string(need));
  }
}

Dataset::Dataset(const std::string& root) : root_(root) {
  const fs::path rain_dir = fs::path(root) / "rain";
  const fs::path gt_dir = fs::path(root) / "gt";
  if (!fs::is_directory(rain_dir) || !fs::is_directory(gt_dir)) {
    throw ArgumentError("dataset root must contain rain/ and gt/: " + root);
  }
  std::vector<std::string> rain_ids, gt_ids;
  for (const auto& e : fs::directory_iterator(rain_dir)) {
    if (e.path().extension() == ".png") rain_ids.push_back(e.path().filename().string());
  }
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() == ".png") gt_ids.push_back(e.path().filename().string());
  }
  std::sort(rain_ids.begin(), rain_ids.end());
  std::sort(gt_ids.begin(), gt_ids.end());
  std::vector<std::string> missing;
  std::set_symmetric_difference(rain_ids.begin(), rain_ids.end(), gt_ids.begin(), gt_ids.end(),
                                std::back_inserter(missing));
  if (!missing.empty()) {
    std::string msg = "dataset: unpaired files:";
    for (const auto& m : missing) msg += " " + m;
    throw ArgumentError(msg);
  }
  if (rain_ids.empty()) throw ArgumentError("dataset: no .png pairs found under " + root);
  ids_ = std::move(rain_ids);
  cache_.resize(ids_.size());
}

image::ImagePair Dataset::load(std::size_t i) const {
  if (cache_[i].has_value()) return *cache_[i];
  image::ImagePair pair;
  pair.rain = image::read_png((fs::path(root_) / "rain" / ids_[i]).string());
  pair.gt = image::read_png((fs::path(root_) / "gt" / ids_[i]).string());
  if (!(pair.rain.shape() == pair.gt.shape())) {
    throw ArgumentError("dataset: pair " + ids_[i] + " has mismatched dims");
  }
  return pair;
}

void Dataset::preload(std::size_t budget_bytes) {
  if (ids_.empty() || cache_[0].has_value()) return;
  image::ImagePair first = load(0);
  const std::size_t per_pair = static_cast<std::size_t>(first.rain.numel()) * sizeof(float) * 2;
  if (per_pair * ids_.size() > budget_bytes) return;
  cache_[0] = std::move(first);
  for (std::size_t i = 1; i < ids_.size(); ++i) cache_[i] = load(i);
}

image::ImagePair sample_patch(const image::ImagePair& pair, std::int64_t size, Rng& rng) {
  const Shape4 s = pair.rain.shape();
  if (s.h < size || s.w < size) {
    throw ArgumentError("sample_patch: image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                        " smaller than patch " + std::to_string(size));
  }
  const std::int64_t y0 = static_cast<std::int64_t>(rng.uniform_index(
      static_cast<std::uint64_t>(s.h - size + 1)));
  const std::int64_t x0 = static_cast<std::int64_t>(rng.uniform_index(
      static_cast<std::uint64_t>(s.w - size + 1)));
  const bool flip_h = rng.bernoulli(0.5);
  const bool flip_v = rng.bernoulli(0.5);

  auto take = [&](const image::Image& img) {
    image::Image out(Shape4{1, 3, size, size});
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = 0; y < size; ++y) {
        const std::int64_t sy = flip_v ? y0 + size - 1 - y : y0 + y;
        for (std::int64_t x = 0; x < size; ++x) {
          const std::int64_t sx = flip_h ? x0 + size - 1 - x : x0 + x;
          out.at(0, c, y, x) = img.at(0, c, sy, sx);
        }
      }
    }
    return out;
  };
  return image::ImagePair{take(pair.rain), take(pair.gt)};
}

namespace {

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(substream_seed(seed, kTagPerm, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

template <typename T>
Tensor<T> to_batch(const std::vector<image::Image>& imgs) {
  const Shape4 s0 = imgs[0].shape();
  Tensor<T> out(Shape4{static_cast<std::int64_t>(imgs.size()), 3, s0.h, s0.w});
  const std::int64_t per = 3 * s0.h * s0.w;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const float* src = imgs[i].data();
    T* dst = out.data() + static_cast<std::int64_t>(i) * per;
    for (std::int64_t j = 0; j < per; ++j) dst[j] = static_cast<T>(src[j]);
  }
  return out;
}

template <typename T>
image::Image to_image(const Tensor<T>& t, std::int64_t batch_index = 0) {
  const Shape4 s = t.shape();
  image::Image img(Shape4{1, 3, s.h, s.w});
  const T* src = t.data() + batch_index * 3 * s.h * s.w;
  for (std::int64_t j = 0; j < 3 * s.h * s.w; ++j) {
    img[j] = std::clamp(static_cast<float>(src[j]), 0.0f, 1.0f);
  }
  return img;
}

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream os;
  os << "checkpoint_" << std::setw(6) << std::setfill('0') << step << ".udrm";
  return os.str();
}

}  // namespace

template <typename T>
TrainResult train_model(model::UDRMixer<T>& m, AdamState<T>& opt, const TrainConfig& cfg,
                        Dataset& data, Dataset* val_data, const std::string& out_dir,
                        const std::string& config_echo) {
  cfg.validate(m.config());
  if (!opt.initialized()) opt.init(m.params());
  fs::create_directories(out_dir);
  data.preload();
  if (val_data) val_data->preload();

  const std::size_t n_pairs = data.size();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((n_pairs + cfg.batch - 1) / static_cast<std::size_t>(cfg.batch));
  const std::int64_t total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;

  {
    std::ofstream cfg_out(fs::path(out_dir) / "config_resolved.txt");
    cfg_out << config_echo;
  }
  const bool resuming = opt.step > 0;
  std::ofstream log(fs::path(out_dir) / "log.csv",
                    resuming ? std::ios::app : std::ios::trunc);
  if (!resuming) log << "step,epoch,loss,lr,val_psnr\n";
  log << std::setprecision(10);

  TrainResult result;
  std::vector<double> epoch_loss_sum;
  std::vector<std::int64_t> epoch_loss_count;
  std::vector<std::size_t> perm;
  std::int64_t perm_epoch = -1;

  for (std::int64_t step = opt.step; step < total_steps; ++step) {
    const std::int64_t epoch = step / steps_per_epoch;
    const std::int64_t pos = step % steps_per_epoch;
    if (epoch != perm_epoch) {
      perm = epoch_permutation(cfg.seed, epoch, n_pairs);
      perm_epoch = epoch;
    }
    const std::size_t lo = static_cast<std::size_t>(pos) * static_cast<std::size_t>(cfg.batch);
    const std::size_t hi = std::min(n_pairs, lo + static_cast<std::size_t>(cfg.batch));

    std::vector<image::Image> rain_patches, gt_patches;
    rain_patches.reserve(hi - lo);
    gt_patches.reserve(hi - lo);
    for (std::size_t slot = lo; slot < hi; ++slot) {
      const image::ImagePair pair = data.load(perm[slot]);
      Rng rng(substream_seed(cfg.seed, kTagPatch,
                             static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(cfg.batch) +
                                 (slot - lo)));
      image::ImagePair patch = sample_patch(pair, cfg.patch, rng);
      rain_patches.push_back(std::move(patch.rain));
      gt_patches.push_back(std::move(patch.gt));
    }
    nn::Var<T> input(to_batch<T>(rain_patches));
    nn::Var<T> target(to_batch<T>(gt_patches));

    m.params().zero_grads();
    nn::Var<T> pred = m.forward(input);
    nn::Var<T> loss = nn::l1_loss(pred, target);
    loss.backward();
    const double loss_value = static_cast<double>(loss.value()[0]);
    adam_step(m.params(), opt, cfg.adam);

    result.step_losses.push_back(loss_value);
    if (static_cast<std::size_t>(epoch) >= epoch_loss_sum.size()) {
      epoch_loss_sum.resize(static_cast<std::size_t>(epoch) + 1, 0.0);
      epoch_loss_count.resize(static_cast<std::size_t>(epoch) + 1, 0);
    }
    epoch_loss_sum[static_cast<std::size_t>(epoch)] += loss_value;
    epoch_loss_count[static_cast<std::size_t>(epoch)] += 1;

    std::string val_field;
    if (val_data && cfg.val_interval > 0 && (step + 1) % cfg.val_interval == 0) {
      const double vp = validate_psnr(m, *val_data);
      std::ostringstream os;
      os << std::setprecision(10) << vp;
      val_field = os.str();
    }
    log << (step + 1) << "," << epoch << "," << loss_value << "," << cfg.adam.lr << ","
        << val_field << "\n";

    const std::int64_t done = step + 1;
    if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 &&
        done < total_steps) {
      const Checkpoint ckpt = make_training_checkpoint(m, opt, cfg.seed, config_echo);
      save_checkpoint((fs::path(out_dir) / checkpoint_name(done)).string(), ckpt);
    }
  }
  log.flush();

  for (std::size_t e = 0; e < epoch_loss_sum.size(); ++e) {
    result.epoch_mean_loss.push_back(
        epoch_loss_count[e] > 0 ? epoch_loss_sum[e] / static_cast<double>(epoch_loss_count[e])
                                : 0.0);
  }
  result.steps = opt.step;
  const Checkpoint ckpt = make_training_checkpoint(m, opt, cfg.seed, config_echo);
  result.final_checkpoint = (fs::path(out_dir) / "checkpoint_final.udrm").string();
  save_checkpoint(result.final_checkpoint, ckpt);
  return result;
}

template <typename T>
Tensor<T> infer_full(const model::UDRMixer<T>& m, const Tensor<T>& img) {
  const Shape4 s = img.shape();
  const std::int64_t need = 2 * m.config().unshuffle;
  const std::int64_t hp = (s.h + need - 1) / need * need;
  const std::int64_t wp = (s.w + need - 1) / need * need;
  if (hp == s.h && wp == s.w) return m.infer(img);
  Tensor<T> padded = kernels::pad_reflect_br(img, hp, wp);
  Tensor<T> out = m.infer(padded);
  return kernels::crop(out, 0, 0, s.h, s.w);
}

namespace {

// Tile start offsets covering [0, extent) with the last tile flush to the end.
std::vector<std::int64_t> tile_positions(std::int64_t extent, std::int64_t tile,
                                         std::int64_t step) {
  std::vector<std::int64_t> pos;
  for (std::int64_t x = 0;; x += step) {
    if (x + tile >= extent) {
      pos.push_back(extent - tile);
      break;
    }
    pos.push_back(x);
  }
  return pos;
}

// Taper profile along one axis of a tile: linear ramps over the overlap zone
// on sides that have a neighbour, flat 1 elsewhere.
std::vector<double> tile_profile(std::int64_t tile, std::int64_t overlap, bool left_neighbor,
                                 bool right_neighbor) {
  std::vector<double> w(static_cast<std::size_t>(tile), 1.0);
  if (overlap > 0) {
    for (std::int64_t i = 0; i < overlap; ++i) {
      const double ramp = static_cast<double>(i + 1) / static_cast<double>(overlap + 1);
      if (left_neighbor) w[static_cast<std::size_t>(i)] *= ramp;
      if (right_neighbor) w[static_cast<std::size_t>(tile - 1 - i)] *= ramp;
    }
  }
  return w;
}

void check_tile_args(const model::ModelConfig& cfg, std::int64_t tile, std::int64_t overlap) {
  const std::int64_t need = 2 * cfg.unshuffle;
  if (tile < need || tile % need != 0) {
    throw ArgumentError("tiled_inference: tile must be a positive multiple of " +
                        std::to_string(need));
  }
  if (overlap < 0 || 2 * overlap >= tile) {
    throw ArgumentError("tiled_inference: overlap must satisfy 0 <= overlap < tile/2");
  }
}

}  // namespace

Tensor<double> tile_weight_field(std::int64_t h, std::int64_t w, std::int64_t tile,
                                 std::int64_t overlap) {
  const std::int64_t step = tile - overlap;
  const auto ys = tile_positions(h, tile, step);
  const auto xs = tile_positions(w, tile, step);
  // First pass: raw taper totals; second pass: sum of the per-tile normalized
  // weights actually applied during blending.
  Tensor<double> raw(Shape4{1, 1, h, w});
  Tensor<double> norm(Shape4{1, 1, h, w});
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t ti = 0; ti < ys.size(); ++ti) {
      const auto py = tile_profile(tile, overlap, ti > 0, ti + 1 < ys.size());
      for (std::size_t tj = 0; tj < xs.size(); ++tj) {
        const auto px = tile_profile(tile, overlap, tj > 0, tj + 1 < xs.size());
        for (std::int64_t y = 0; y < tile; ++y) {
          for (std::int64_t x = 0; x < tile; ++x) {
            const double wgt = py[static_cast<std::size_t>(y)] * px[static_cast<std::size_t>(x)];
            if (pass == 0) {
              raw.at(0, 0, ys[ti] + y, xs[tj] + x) += wgt;
            } else {
              norm.at(0, 0, ys[ti] + y, xs[tj] + x) += wgt / raw.at(0, 0, ys[ti] + y, xs[tj] + x);
            }
          }
        }
      }
    }
  }
  return norm;
}

template <typename T>
Tensor<T> tiled_inference(const model::UDRMixer<T>& m, const Tensor<T>& img, std::int64_t tile,
                          std::int64_t overlap) {
  check_tile_args(m.config(), tile, overlap);
  const Shape4 s = img.shape();
  if (s.h <= tile && s.w <= tile) return infer_full(m, img);

  const std::int64_t need = 2 * m.config().unshuffle;
  const std::int64_t hp = std::max(tile, (s.h + need - 1) / need * need);
  const std::int64_t wp = std::max(tile, (s.w + need - 1) / need * need);
  Tensor<T> padded = (hp == s.h && wp == s.w) ? img : kernels::pad_reflect_br(img, hp, wp);

  const std::int64_t step = tile - overlap;
  const auto ys = tile_positions(hp, tile, step);
  const auto xs = tile_positions(wp, tile, step);

  Tensor<double> acc(Shape4{1, s.c, hp, wp});
  Tensor<double> wsum(Shape4{1, 1, hp, wp});
  for (std::size_t ti = 0; ti < ys.size(); ++ti) {
    const auto py = tile_profile(tile, overlap, ti > 0, ti + 1 < ys.size());
    for (std::size_t tj = 0; tj < xs.size(); ++tj) {
      const auto px = tile_profile(tile, overlap, tj > 0, tj + 1 < xs.size());
      Tensor<T> patch = kernels::crop(padded, ys[ti], xs[tj], tile, tile);
      Tensor<T> out = m.infer(patch);
      for (std::int64_t y = 0; y < tile; ++y) {
        for (std::int64_t x = 0; x < tile; ++x) {
          const double wgt = py[static_cast<std::size_t>(y)] * px[static_cast<std::size_t>(x)];
          for (std::int64_t c = 0; c < s.c; ++c) {
            acc.at(0, c, ys[ti] + y, xs[tj] + x) +=
                wgt * static_cast<double>(out.at(0, c, y, x));
          }
          wsum.at(0, 0, ys[ti] + y, xs[tj] + x) += wgt;
        }
      }
    }
  }
  Tensor<T> result(Shape4{1, s.c, s.h, s.w});
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        result.at(0, c, y, x) =
            static_cast<T>(acc.at(0, c, y, x) / wsum.at(0, 0, y, x));
      }
    }
  }
  return result;
}

metrics::MetricsReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir,
                                     bool luminance_ssim) {
  auto list_pngs = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw ArgumentError("not a directory: " + dir);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".png") ids.push_back(e.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto pred_ids = list_pngs(pred_dir);
  const auto gt_ids = list_pngs(gt_dir);
  std::vector<std::string> missing;
  std::set_symmetric_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(),
                                std::back_inserter(missing));
  if (!missing.empty()) {
    std::string msg = "evaluate: unpaired files:";
    for (const auto& m : missing) msg += " " + m;
    throw ArgumentError(msg);
  }
  if (pred_ids.empty()) throw ArgumentError("evaluate: no .png files found");

  metrics::MetricsReport report;
  for (const auto& id : pred_ids) {
    const image::Image p = image::read_png((fs::path(pred_dir) / id).string());
    const image::Image g = image::read_png((fs::path(gt_dir) / id).string());
    metrics::ImageRecord rec;
    rec.id = id;
    rec.mse = metrics::mse(p, g);
    rec.psnr = metrics::psnr(p, g);
    rec.ssim = metrics::ssim(p, g, luminance_ssim);
    report.records.push_back(std::move(rec));
  }
  report.finalize();
  return report;
}

template <typename T>
double validate_psnr(const model::UDRMixer<T>& m, Dataset& data) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const image::ImagePair pair = data.load(i);
    Tensor<T> input = pair.rain.template cast<T>();
    Tensor<T> out = infer_full(m, input);
    acc += metrics::psnr(to_image(out), pair.gt);
  }
  return acc / static_cast<double>(data.size());
}

template TrainResult train_model<float>(model::UDRMixer<float>&, AdamState<float>&,
                                        const TrainConfig&, Dataset&, Dataset*,
                                        const std::string&, const std::string&);
template TrainResult train_model<double>(model::UDRMixer<double>&, AdamState<double>&,
                                         const TrainConfig&, Dataset&, Dataset*,
                                         const std::string&, const std::string&);
template Tensor<float> infer_full<float>(const model::UDRMixer<float>&, const Tensor<float>&);
template Tensor<double> infer_full<double>(const model::UDRMixer<double>&, const Tensor<double>&);
template Tensor<float> tiled_inference<float>(const model::UDRMixer<float>&, const Tensor<float>&,
                                              std::int64_t, std::int64_t);
template Tensor<double> tiled_inference<double>(const model::UDRMixer<double>&,
                                                const Tensor<double>&, std::int64_t, std::int64_t);
template double validate_psnr<float>(const model::UDRMixer<float>&, Dataset&);
template double validate_psnr<double>(const model::UDRMixer<double>&, Dataset&);

}  // namespace udr::train
