#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "udr/config.hpp"
#include "udr/image.hpp"
#include "udr/rain.hpp"
#include "udr/train.hpp"

namespace fs = std::filesystem;
using udr::config::RunConfig;

namespace {

std::string pad_id(int i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

std::pair<double, double> parse_range(const std::string& s, const std::string& flag) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) {
    throw udr::ArgumentError(flag + " expects min:max, got '" + s + "'");
  }
  return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw udr::ArgumentError("cannot write " + path.string());
  os << text;
}

std::vector<std::string> list_pngs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw udr::ArgumentError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string backgrounds, out, config_file;
  int count = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string density, length_range, angle_range, thickness, alpha_range, base_width;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = a.config_file.empty() ? RunConfig{} : RunConfig::parse_file(a.config_file);
  if (a.seed_set) cfg.rain.seed = a.seed;
  if (!a.density.empty()) cfg.set_key("rain.density", a.density);
  if (!a.thickness.empty()) cfg.set_key("rain.thickness", a.thickness);
  if (!a.base_width.empty()) cfg.set_key("rain.base_width", a.base_width);
  if (!a.length_range.empty()) {
    const auto [lo, hi] = parse_range(a.length_range, "--length-range");
    cfg.rain.length_min = lo;
    cfg.rain.length_max = hi;
  }
  if (!a.angle_range.empty()) {
    const auto [lo, hi] = parse_range(a.angle_range, "--angle-range");
    cfg.rain.angle_min = lo;
    cfg.rain.angle_max = hi;
  }
  if (!a.alpha_range.empty()) {
    const auto [lo, hi] = parse_range(a.alpha_range, "--alpha-range");
    cfg.rain.alpha_min = lo;
    cfg.rain.alpha_max = hi;
  }
  cfg.rain.validate();

  const auto bgs = list_pngs(a.backgrounds);
  if (bgs.empty()) throw udr::ArgumentError("no .png backgrounds in " + a.backgrounds);

  fs::create_directories(fs::path(a.out) / "rain");
  fs::create_directories(fs::path(a.out) / "gt");
  for (int i = 0; i < a.count; ++i) {
    const udr::image::Image bg = udr::image::read_png(bgs[static_cast<std::size_t>(i) % bgs.size()]);
    const udr::image::ImagePair pair =
        udr::rain::synthesize_pair(bg, cfg.rain, static_cast<std::uint64_t>(i));
    udr::image::write_png((fs::path(a.out) / "rain" / pad_id(i)).string(), pair.rain);
    udr::image::write_png((fs::path(a.out) / "gt" / pad_id(i)).string(), pair.gt);
  }
  std::ostringstream manifest;
  manifest << cfg.serialize() << "synth.count=" << a.count << "\nsynth.backgrounds="
           << a.backgrounds << "\n";
  write_text(fs::path(a.out) / "manifest.txt", manifest.str());
  std::cout << "wrote " << a.count << " pairs to " << a.out << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config_file, val_data, resume;
  int epochs = -1, steps = -1, batch = -1, patch = -1;
  double lr = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

template <typename T>
int run_train_typed(RunConfig cfg, const TrainArgs& a) {
  udr::model::UDRMixer<T> model(cfg.model, cfg.train.seed);
  udr::train::AdamState<T> opt;
  if (!a.resume.empty()) {
    const udr::train::Checkpoint ckpt = udr::train::load_checkpoint(a.resume);
    std::uint64_t seed = cfg.train.seed;
    udr::train::apply_training_checkpoint(ckpt, model, &opt, &seed);
    cfg.train.seed = seed;  // resumed runs keep the original stream
  }
  udr::train::Dataset data(a.data);
  std::unique_ptr<udr::train::Dataset> val;
  if (!a.val_data.empty()) val = std::make_unique<udr::train::Dataset>(a.val_data);
  const udr::train::TrainResult result =
      udr::train::train_model(model, opt, cfg.train, data, val.get(), a.out, cfg.serialize());
  std::cout << "trained " << result.steps << " steps; final checkpoint: "
            << result.final_checkpoint << "\n";
  if (!result.epoch_mean_loss.empty()) {
    std::cout << "first epoch mean loss " << result.epoch_mean_loss.front()
              << ", last epoch mean loss " << result.epoch_mean_loss.back() << "\n";
  }
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.config_file.empty() ? RunConfig{} : RunConfig::parse_file(a.config_file);
  if (a.epochs >= 0) cfg.train.epochs = a.epochs;
  if (a.steps >= 0) cfg.train.max_steps = a.steps;
  if (a.batch >= 0) cfg.train.batch = a.batch;
  if (a.patch >= 0) cfg.train.patch = a.patch;
  if (a.lr >= 0.0) cfg.train.adam.lr = a.lr;
  if (a.seed_set) cfg.train.seed = a.seed;
  if (cfg.precision == "f64") return run_train_typed<double>(std::move(cfg), a);
  return run_train_typed<float>(std::move(cfg), a);
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint, input, output;
  int tile = 0;
  int overlap = 64;
};

template <typename T>
int run_infer_typed(const udr::train::Checkpoint& ckpt, const RunConfig& cfg, const InferArgs& a) {
  udr::model::UDRMixer<T> model(cfg.model, 0);
  udr::train::apply_training_checkpoint<T>(ckpt, model, nullptr, nullptr);

  std::vector<std::pair<std::string, std::string>> jobs;  // input path -> output path
  if (fs::is_directory(a.input)) {
    fs::create_directories(a.output);
    for (const auto& in : list_pngs(a.input)) {
      jobs.emplace_back(in, (fs::path(a.output) / fs::path(in).filename()).string());
    }
    if (jobs.empty()) throw udr::ArgumentError("no .png inputs in " + a.input);
  } else {
    if (!fs::path(a.output).parent_path().empty()) {
      fs::create_directories(fs::path(a.output).parent_path());
    }
    jobs.emplace_back(a.input, a.output);
  }

  for (const auto& [in_path, out_path] : jobs) {
    const udr::image::Image img = udr::image::read_png(in_path);
    udr::Tensor<T> input = img.template cast<T>();
    udr::Tensor<T> out = a.tile > 0
                        ? udr::train::tiled_inference(model, input, a.tile, a.overlap)
                        : udr::train::infer_full(model, input);
    udr::image::Image result(out.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      result[i] = std::clamp(static_cast<float>(out[i]), 0.0f, 1.0f);
    }
    udr::image::write_png(out_path, result);
  }

  std::ostringstream manifest;
  manifest << cfg.serialize() << "infer.checkpoint=" << a.checkpoint << "\ninfer.tile=" << a.tile
           << "\ninfer.overlap=" << a.overlap << "\n";
  const fs::path mpath = fs::is_directory(a.output)
                             ? fs::path(a.output) / "manifest.txt"
                             : fs::path(a.output + ".manifest.txt");
  write_text(mpath, manifest.str());
  std::cout << "wrote " << jobs.size() << " image(s)\n";
  return 0;
}

int cmd_infer(const InferArgs& a) {
  const udr::train::Checkpoint ckpt = udr::train::load_checkpoint(a.checkpoint);
  const RunConfig cfg = RunConfig::parse_text(ckpt.config_text);
  if (cfg.precision == "f64") return run_infer_typed<double>(ckpt, cfg, a);
  return run_infer_typed<float>(ckpt, cfg, a);
}

// --- eval / report-complexity ----------------------------------------------

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& report,
             bool luminance) {
  const udr::metrics::MetricsReport rep = udr::train::evaluate_dirs(pred, gt, luminance);
  if (!fs::path(report).parent_path().empty()) {
    fs::create_directories(fs::path(report).parent_path());
  }
  write_text(report, rep.to_csv());
  std::ostringstream manifest;
  manifest << "eval.pred=" << pred << "\neval.gt=" << gt << "\neval.luminance="
           << (luminance ? 1 : 0) << "\n";
  write_text(report + ".manifest.txt", manifest.str());
  std::cout << "images: " << rep.records.size() << "\nmean psnr: " << rep.mean_psnr
            << " dB\nmean ssim: " << rep.mean_ssim << "\nmean mse: " << rep.mean_mse << "\n";
  return 0;
}

int cmd_report_complexity(const std::string& config_file, int height, int width) {
  RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::parse_file(config_file);
  const udr::model::ComplexityReport rep =
      udr::model::describe_complexity(cfg.model, height, width);
  // Echo the resolved model configuration so the report is self-describing.
  std::istringstream cfg_lines(cfg.serialize());
  std::string line;
  while (std::getline(cfg_lines, line)) {
    if (line.rfind("model.", 0) == 0) std::cout << "# " << line << "\n";
  }
  std::cout << std::left << std::setw(34) << "layer" << std::right << std::setw(12) << "params"
            << std::setw(16) << "flops" << "\n";
  for (const auto& layer : rep.layers) {
    std::cout << std::left << std::setw(34) << layer.name << std::right << std::setw(12)
              << layer.params << std::setw(16) << layer.flops << "\n";
  }
  std::cout << std::left << std::setw(34) << "TOTAL" << std::right << std::setw(12)
            << rep.total_params << std::setw(16) << rep.total_flops << "\n";
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "\ntotal params: " << static_cast<double>(rep.total_params) / 1e6 << " M\n";
  std::cout << "total flops @" << height << "x" << width << ": "
            << static_cast<double>(rep.total_flops) / 1e9 << " G\n";
  std::cout << "published UDR-Mixer reference: 4.90 M params, 200.1 G flops @1024x1024\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UDR-Mixer UHD image deraining toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "synthesize paired rainy/clean images");
  synth->add_option("--backgrounds", sa.backgrounds, "directory of background PNGs")->required();
  synth->add_option("--out", sa.out, "output dataset directory")->required();
  synth->add_option("--count", sa.count, "number of pairs")->required();
  synth->add_option("--seed", sa.seed, "RNG seed")->each([&sa](const std::string&) {
    sa.seed_set = true;
  });
  synth->add_option("--config", sa.config_file, "key=value config file");
  synth->add_option("--density", sa.density, "seed pixel density");
  synth->add_option("--length-range", sa.length_range, "streak length min:max (px)");
  synth->add_option("--angle-range", sa.angle_range, "angle min:max (degrees from vertical)");
  synth->add_option("--thickness", sa.thickness, "streak thickness (px)");
  synth->add_option("--alpha-range", sa.alpha_range, "blend opacity min:max");
  synth->add_option("--base-width", sa.base_width, "reference render width (px)");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train the deraining model");
  train->add_option("--data", ta.data, "dataset directory (rain/ + gt/)")->required();
  train->add_option("--out", ta.out, "output directory")->required();
  train->add_option("--config", ta.config_file, "key=value config file");
  train->add_option("--epochs", ta.epochs, "training epochs");
  train->add_option("--steps", ta.steps, "stop after this many steps");
  train->add_option("--batch", ta.batch, "batch size");
  train->add_option("--patch", ta.patch, "patch size");
  train->add_option("--lr", ta.lr, "learning rate");
  train->add_option("--seed", ta.seed, "RNG seed")->each([&ta](const std::string&) {
    ta.seed_set = true;
  });
  train->add_option("--val-data", ta.val_data, "held-out dataset for validation PSNR");
  train->add_option("--resume", ta.resume, "checkpoint to resume from");

  InferArgs ia;
  CLI::App* infer = app.add_subcommand("infer", "derain an image or directory");
  infer->add_option("--checkpoint", ia.checkpoint, "model checkpoint")->required();
  infer->add_option("--input", ia.input, "input image or directory")->required();
  infer->add_option("--output", ia.output, "output image or directory")->required();
  infer->add_option("--tile", ia.tile, "tile size (0 = whole image)");
  infer->add_option("--overlap", ia.overlap, "tile overlap in px");

  std::string ev_pred, ev_gt, ev_report;
  bool ev_luminance = false;
  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM/MSE report for paired directories");
  eval->add_option("--pred", ev_pred, "predictions directory")->required();
  eval->add_option("--gt", ev_gt, "ground-truth directory")->required();
  eval->add_option("--report", ev_report, "output CSV path")->required();
  eval->add_flag("--luminance", ev_luminance, "SSIM on luminance instead of RGB mean");

  std::string rc_config;
  int rc_h = 1024, rc_w = 1024;
  CLI::App* rc = app.add_subcommand("report-complexity", "per-layer params and FLOPs");
  rc->add_option("--config", rc_config, "key=value config file");
  rc->add_option("--height", rc_h, "input height");
  rc->add_option("--width", rc_w, "input width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa);
    if (train->parsed()) return cmd_train(ta);
    if (infer->parsed()) return cmd_infer(ia);
    if (eval->parsed()) return cmd_eval(ev_pred, ev_gt, ev_report, ev_luminance);
    if (rc->parsed()) return cmd_report_complexity(rc_config, rc_h, rc_w);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
