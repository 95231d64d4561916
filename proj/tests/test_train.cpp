#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "udr/checkpoint.hpp"
#include "udr/config.hpp"
#include "udr/image.hpp"
#include "udr/metrics.hpp"
#include "udr/model.hpp"
#include "udr/optim.hpp"
#include "udr/rain.hpp"
#include "udr/train.hpp"

namespace fs = std::filesystem;
using namespace udr;
using model::ModelConfig;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "udr_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

image::Image gradient_background(std::int64_t h, std::int64_t w, float shift = 0.0f) {
  image::Image bg = image::make_image(h, w);
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        bg.at(0, c, y, x) = static_cast<float>(
            0.1 + shift + 0.5 * (static_cast<double>(y) / h) +
            0.3 * (static_cast<double>(x) / w) * (static_cast<double>(c + 1) / 3.0));
      }
    }
  }
  return bg;
}

// Writes n synthesized pairs and returns the dataset root.
fs::path make_dataset(const std::string& name, int n, std::int64_t h, std::int64_t w,
                      std::uint64_t seed) {
  const fs::path root = temp_dir(name);
  fs::create_directories(root / "rain");
  fs::create_directories(root / "gt");
  rain::RainConfig rc;
  rc.base_width = static_cast<int>(w);
  rc.density = 0.01;
  rc.length_min = 9;
  rc.length_max = 17;
  rc.seed = seed;
  for (int i = 0; i < n; ++i) {
    const image::Image bg = gradient_background(h, w, 0.02f * static_cast<float>(i % 5));
    const image::ImagePair pair = rain::synthesize_pair(bg, rc, static_cast<std::uint64_t>(i));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", i);
    image::write_png((root / "rain" / buf).string(), pair.rain);
    image::write_png((root / "gt" / buf).string(), pair.gt);
  }
  return root;
}

ModelConfig tiny_cfg() {
  ModelConfig cfg = ModelConfig::toy();
  cfg.c_main = 8;
  cfg.c_aux = 8;
  cfg.n1 = cfg.n2 = cfg.n3 = 1;
  cfg.sfrl_cube = 8;
  return cfg;
}

train::TrainConfig tiny_train_cfg(int steps) {
  train::TrainConfig tc;
  tc.max_steps = steps;
  tc.epochs = 1;
  tc.batch = 2;
  tc.patch = 16;
  tc.seed = 7;
  tc.adam.lr = 1e-3;
  return tc;
}

}  // namespace

TEST_CASE("adam oracle") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    model::ParamRegistry<double> reg;
    auto var = reg.add("p", Tensor<double>::full(Shape4{1, 1, 1, 1}, 0.7));
    var.grad();  // allocate zero gradient
    train::AdamState<double> st;
    train::AdamConfig cfg;
    adam_step(reg, st, cfg);
    CHECK(reg.items()[0].second.value()[0] == 0.7);
    CHECK(st.step == 1);
  }

  SUBCASE("first step with unit gradient moves by about -lr") {
    model::ParamRegistry<double> reg;
    auto var = reg.add("p", Tensor<double>::full(Shape4{1, 1, 1, 1}, 0.0));
    var.grad()[0] = 1.0;
    train::AdamState<double> st;
    train::AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(reg, st, cfg);
    // mhat = 1, vhat = 1 -> delta = -lr / (1 + eps)
    CHECK(reg.items()[0].second.value()[0] ==
          doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  }

  SUBCASE("three steps match the hand recurrence to 1e-10") {
    const double g_seq[3] = {1.0, -0.5, 0.25};
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    // Hand-computed recurrence.
    double w_hand = 0.3, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      const double g = g_seq[t - 1];
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mhat = m / (1 - std::pow(b1, t));
      const double vhat = v / (1 - std::pow(b2, t));
      w_hand -= lr * mhat / (std::sqrt(vhat) + eps);
    }

    model::ParamRegistry<double> reg;
    auto var = reg.add("p", Tensor<double>::full(Shape4{1, 1, 1, 1}, 0.3));
    train::AdamState<double> st;
    train::AdamConfig cfg;
    cfg.lr = lr;
    for (int t = 0; t < 3; ++t) {
      var.zero_grad();
      var.grad()[0] = g_seq[t];
      adam_step(reg, st, cfg);
    }
    CHECK(std::abs(reg.items()[0].second.value()[0] - w_hand) <= 1e-10);
  }

  SUBCASE("shape mismatch rejected") {
    model::ParamRegistry<double> reg;
    reg.add("p", Tensor<double>(Shape4{1, 2, 1, 1}));
    train::AdamState<double> st;
    st.init(reg);
    st.m[0] = Tensor<double>(Shape4{1, 3, 1, 1});
    CHECK_THROWS_AS(adam_step(reg, st, train::AdamConfig{}), ShapeError);
  }
}

TEST_CASE("sample_patch") {
  image::ImagePair pair;
  pair.rain = gradient_background(40, 36);
  pair.gt = gradient_background(40, 36, 0.1f);

  SUBCASE("bounds hold over many draws") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const image::ImagePair patch = train::sample_patch(pair, 16, rng);
      CHECK(patch.rain.shape() == Shape4{1, 3, 16, 16});
      for (std::int64_t j = 0; j < patch.rain.numel(); ++j) {
        CHECK(std::isfinite(patch.rain[j]));
      }
    }
  }

  SUBCASE("marker pixel lands at the same coordinate in both outputs") {
    image::ImagePair marked = pair;
    marked.rain.at(0, 0, 21, 17) = -7.0f;
    marked.gt.at(0, 0, 21, 17) = -7.0f;
    Rng rng(2);
    int found = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const image::ImagePair patch = train::sample_patch(marked, 16, rng);
      for (std::int64_t y = 0; y < 16; ++y) {
        for (std::int64_t x = 0; x < 16; ++x) {
          if (patch.rain.at(0, 0, y, x) == -7.0f) {
            ++found;
            CHECK(patch.gt.at(0, 0, y, x) == -7.0f);
          }
        }
      }
    }
    CHECK(found > 0);
  }

  SUBCASE("double flip restores the patch") {
    // Flipping is an involution: two H flips (or two V flips) cancel.
    image::Image img = gradient_background(16, 16);
    auto flip_h = [](const image::Image& x) {
      image::Image out(x.shape());
      const Shape4 s = x.shape();
      for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t y = 0; y < s.h; ++y) {
          for (std::int64_t xx = 0; xx < s.w; ++xx) {
            out.at(0, c, y, xx) = x.at(0, c, y, s.w - 1 - xx);
          }
        }
      }
      return out;
    };
    CHECK(flip_h(flip_h(img)).vec() == img.vec());
  }

  SUBCASE("patch larger than image rejected") {
    Rng rng(3);
    CHECK_THROWS_AS(train::sample_patch(pair, 64, rng), ArgumentError);
  }
}

TEST_CASE("dataset loading and pairing") {
  const fs::path root = make_dataset("dataset_ok", 4, 32, 32, 5);
  train::Dataset data(root.string());
  CHECK(data.size() == 4);
  const image::ImagePair pair = data.load(0);
  CHECK(pair.rain.shape() == Shape4{1, 3, 32, 32});

  SUBCASE("unpaired file detected with its id") {
    fs::remove(root / "gt" / "00002.png");
    try {
      train::Dataset broken(root.string());
      FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
      CHECK(std::string(e.what()).find("00002.png") != std::string::npos);
    }
  }

  SUBCASE("empty dataset rejected") {
    const fs::path empty = temp_dir("dataset_empty");
    fs::create_directories(empty / "rain");
    fs::create_directories(empty / "gt");
    CHECK_THROWS_AS(train::Dataset{empty.string()}, ArgumentError);
  }

  SUBCASE("missing layout rejected") {
    const fs::path bare = temp_dir("dataset_bare");
    CHECK_THROWS_AS(train::Dataset{bare.string()}, ArgumentError);
  }
}

TEST_CASE("checkpoint round trip and error paths") {
  ModelConfig cfg = tiny_cfg();
  model::UDRMixer<float> m(cfg, 11);
  train::AdamState<float> opt;
  opt.init(m.params());
  opt.step = 42;
  const std::string config_echo = "model.c_main=8\n";
  const fs::path dir = temp_dir("ckpt");
  const std::string path = (dir / "test.udrm").string();

  train::Checkpoint ck = train::make_training_checkpoint(m, opt, 1234, config_echo);
  train::save_checkpoint(path, ck);
  train::Checkpoint back = train::load_checkpoint(path);

  SUBCASE("bit-exact round trip") {
    CHECK(back.version == ck.version);
    CHECK(back.config_text == ck.config_text);
    REQUIRE(back.records.size() == ck.records.size());
    for (std::size_t i = 0; i < ck.records.size(); ++i) {
      CHECK(back.records[i].name == ck.records[i].name);
      CHECK(back.records[i].raw == ck.records[i].raw);
    }
    model::UDRMixer<float> m2(cfg, 99);  // different init, then overwritten
    train::AdamState<float> opt2;
    std::uint64_t seed = 0;
    train::apply_training_checkpoint(back, m2, &opt2, &seed);
    CHECK(seed == 1234);
    CHECK(opt2.step == 42);
    for (std::size_t i = 0; i < m.params().items().size(); ++i) {
      CHECK(m2.params().items()[i].second.value().vec() ==
            m.params().items()[i].second.value().vec());
    }
  }

  SUBCASE("corrupted magic rejected") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(train::load_checkpoint(path), doctest::Contains("magic"),
                         std::runtime_error);
  }

  SUBCASE("truncated file rejected") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(train::load_checkpoint(path), doctest::Contains("truncated"),
                         std::runtime_error);
  }

  SUBCASE("unknown parameter name rejected on load") {
    ModelConfig other = tiny_cfg();
    other.n3 = 2;  // extra block: checkpoint lacks its params
    model::UDRMixer<float> m3(other, 1);
    CHECK_THROWS_WITH_AS(train::apply_training_checkpoint<float>(back, m3, nullptr, nullptr),
                         doctest::Contains("missing parameter"), std::runtime_error);
    // And the reverse: a record the model does not know.
    train::Checkpoint extra = back;
    extra.records.push_back(train::CheckpointRecord::from_u64("bogus.param", {1}));
    extra.records.back().dtype = train::DType::kF32;
    extra.records.back().dims = {1, 1, 1, 1};
    extra.records.back().raw.assign(4, 0);
    model::UDRMixer<float> m4(cfg, 1);
    CHECK_THROWS_WITH_AS(train::apply_training_checkpoint<float>(extra, m4, nullptr, nullptr),
                         doctest::Contains("unknown parameter"), std::runtime_error);
  }
}

TEST_CASE("training loop: determinism and resume splice") {
  const fs::path root = make_dataset("train_data", 6, 32, 32, 21);
  ModelConfig cfg = tiny_cfg();

  auto run_full = [&](const std::string& tag, int steps) {
    train::Dataset data(root.string());
    model::UDRMixer<float> m(cfg, 33);
    train::AdamState<float> opt;
    const train::TrainConfig tc = tiny_train_cfg(steps);
    const fs::path out = temp_dir("train_out_" + tag);
    return std::make_pair(
        train::train_model(m, opt, tc, data, nullptr, out.string(), "cfg\n"),
        m.params().items()[0].second.value().vec());
  };

  SUBCASE("losses are finite and bit-identical across same-seed runs") {
    auto [r1, w1] = run_full("a", 6);
    auto [r2, w2] = run_full("b", 6);
    REQUIRE(r1.step_losses.size() == 6);
    for (double l : r1.step_losses) CHECK(std::isfinite(l));
    CHECK(r1.step_losses == r2.step_losses);
    CHECK(w1 == w2);
  }

  SUBCASE("resume reproduces the uninterrupted run bit-exactly") {
    auto [full, w_full] = run_full("full", 6);

    // Interrupted: 3 steps, checkpoint, fresh model, 3 more.
    train::Dataset data(root.string());
    model::UDRMixer<float> m(cfg, 33);
    train::AdamState<float> opt;
    const fs::path out1 = temp_dir("train_out_part1");
    const train::TrainResult r1 =
        train::train_model(m, opt, tiny_train_cfg(3), data, nullptr, out1.string(), "cfg\n");

    model::UDRMixer<float> m2(cfg, 999);  // scrambled init, point proven by overwrite
    train::AdamState<float> opt2;
    std::uint64_t seed = 0;
    train::apply_training_checkpoint(train::load_checkpoint(r1.final_checkpoint), m2, &opt2,
                                     &seed);
    train::TrainConfig tc2 = tiny_train_cfg(6);
    tc2.seed = seed;
    const fs::path out2 = temp_dir("train_out_part2");
    const train::TrainResult r2 =
        train::train_model(m2, opt2, tc2, data, nullptr, out2.string(), "cfg\n");

    REQUIRE(r1.step_losses.size() == 3);
    REQUIRE(r2.step_losses.size() == 3);
    std::vector<double> spliced = r1.step_losses;
    spliced.insert(spliced.end(), r2.step_losses.begin(), r2.step_losses.end());
    CHECK(spliced == full.step_losses);
    CHECK(m2.params().items()[0].second.value().vec() == w_full);
  }

  SUBCASE("log csv shape") {
    train::Dataset data(root.string());
    model::UDRMixer<float> m(cfg, 33);
    train::AdamState<float> opt;
    const fs::path out = temp_dir("train_log");
    train::train_model(m, opt, tiny_train_cfg(4), data, nullptr, out.string(), "echo=1\n");
    std::ifstream log(out / "log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,epoch,loss,lr,val_psnr");
    int rows = 0;
    std::string line;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 4);
    std::ifstream echo(out / "config_resolved.txt");
    std::string content;
    std::getline(echo, content);
    CHECK(content == "echo=1");
  }
}

TEST_CASE("tiled inference") {
  ModelConfig cfg = tiny_cfg();
  model::UDRMixer<float> m(cfg, 44);

  SUBCASE("blend weight field sums to one everywhere") {
    for (auto [h, w, tile, overlap] :
         {std::array<std::int64_t, 4>{256, 256, 128, 32},
          std::array<std::int64_t, 4>{300, 260, 128, 32},
          std::array<std::int64_t, 4>{512, 384, 128, 0}}) {
      Tensor<double> field = train::tile_weight_field(h, w, tile, overlap);
      for (std::int64_t i = 0; i < field.numel(); ++i) {
        CHECK(field[i] == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  SUBCASE("image smaller than the tile matches direct inference bit-exactly") {
    Tensor<float> img(Shape4{1, 3, 48, 40});
    Rng rng(9);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
      img[i] = static_cast<float>(rng.uniform());
    }
    Tensor<float> full = train::infer_full(m, img);
    Tensor<float> tiled = train::tiled_inference(m, img, 64, 8);
    CHECK(full.vec() == tiled.vec());
    CHECK(full.shape() == img.shape());
  }

  SUBCASE("argument validation") {
    Tensor<float> img(Shape4{1, 3, 64, 64});
    CHECK_THROWS_AS(train::tiled_inference(m, img, 30, 4), ArgumentError);   // not divisible
    CHECK_THROWS_AS(train::tiled_inference(m, img, 32, 16), ArgumentError);  // overlap >= tile/2
    CHECK_THROWS_AS(train::tiled_inference(m, img, 32, -1), ArgumentError);
  }

  SUBCASE("output dims preserved on non-divisible input") {
    Tensor<float> img(Shape4{1, 3, 50, 46});
    Rng rng(10);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
      img[i] = static_cast<float>(rng.uniform());
    }
    CHECK(train::infer_full(m, img).shape() == img.shape());
    CHECK(train::tiled_inference(m, img, 32, 8).shape() == img.shape());
  }
}

TEST_CASE("evaluate_dirs") {
  const fs::path root = make_dataset("eval_data", 3, 32, 32, 31);

  SUBCASE("identity mapping reproduces per-image psnr(rainy, gt)") {
    const metrics::MetricsReport rep =
        train::evaluate_dirs((root / "rain").string(), (root / "gt").string());
    REQUIRE(rep.records.size() == 3);
    train::Dataset data(root.string());
    for (std::size_t i = 0; i < 3; ++i) {
      const image::ImagePair pair = data.load(i);
      CHECK(rep.records[i].psnr == metrics::psnr(pair.rain, pair.gt));
      CHECK(rep.records[i].mse == metrics::mse(pair.rain, pair.gt));
    }
  }

  SUBCASE("aggregate equals the mean of the rows") {
    const metrics::MetricsReport rep =
        train::evaluate_dirs((root / "rain").string(), (root / "gt").string());
    double acc = 0.0;
    for (const auto& r : rep.records) acc += r.psnr;
    CHECK(rep.mean_psnr == doctest::Approx(acc / 3.0).epsilon(1e-9));
  }

  SUBCASE("self comparison pegs the cap") {
    const metrics::MetricsReport rep =
        train::evaluate_dirs((root / "gt").string(), (root / "gt").string());
    CHECK(rep.mean_psnr == metrics::kPsnrCap);
    CHECK(rep.mean_ssim == doctest::Approx(1.0).epsilon(1e-8));
  }

  SUBCASE("unpaired files listed") {
    fs::remove(root / "gt" / "00001.png");
    try {
      train::evaluate_dirs((root / "rain").string(), (root / "gt").string());
      FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
      CHECK(std::string(e.what()).find("00001.png") != std::string::npos);
    }
  }
}

TEST_CASE("run config round trip") {
  config::RunConfig cfg;
  cfg.model.c_main = 24;
  cfg.model.sfrl_form = model::SfrlForm::kParallelSum;
  cfg.model.aux_full_res = true;
  cfg.train.adam.lr = 3.14159e-4;
  cfg.train.seed = 123456789012345ULL;
  cfg.rain.alpha_max = 0.7123456789;
  cfg.precision = "f64";
  const std::string text = cfg.serialize();
  const config::RunConfig back = config::RunConfig::parse_text(text);
  CHECK(back == cfg);
  CHECK(back.model.c_main == 24);
  CHECK(back.train.adam.lr == cfg.train.adam.lr);  // exact, 17 significant digits
  CHECK(back.rain.alpha_max == cfg.rain.alpha_max);

  CHECK_THROWS_AS(config::RunConfig::parse_text("no_such_key=1\n"), ArgumentError);
  CHECK_THROWS_AS(config::RunConfig::parse_text("model.n1\n"), ArgumentError);
  CHECK_THROWS_AS(config::RunConfig::parse_text("model.n1=abc\n"), ArgumentError);

  // Comments and blank lines are accepted.
  const config::RunConfig c2 = config::RunConfig::parse_text("# comment\n\nmodel.n1=5\n");
  CHECK(c2.model.n1 == 5);
}
