#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "udr/image.hpp"
#include "udr/model.hpp"
#include "udr/rng.hpp"

namespace fs = std::filesystem;
using namespace udr;

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string text;
};

RunOutput run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = fs::temp_directory_path() / ("udr_cli_out_" + std::to_string(counter++));
  const std::string cmd = std::string(UDR_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  RunOutput result;
  result.exit_code = WEXITSTATUS(rc);
  std::ifstream f(out);
  std::ostringstream os;
  os << f.rdbuf();
  result.text = os.str();
  fs::remove(out);
  return result;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "udr_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path make_backgrounds(const std::string& name, int n, std::int64_t h, std::int64_t w) {
  const fs::path dir = temp_dir(name);
  for (int i = 0; i < n; ++i) {
    image::Image bg = image::make_image(h, w);
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          bg.at(0, c, y, x) = static_cast<float>(
              0.2 + 0.5 * (static_cast<double>(y) / h) + 0.05 * rng.uniform());
        }
      }
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "bg%03d.png", i);
    image::write_png((dir / buf).string(), bg);
  }
  return dir;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string toy_config_text() {
  return "model.n1=1\nmodel.n2=1\nmodel.n3=1\nmodel.c_main=8\nmodel.c_aux=8\n"
         "model.unshuffle=2\nmodel.sfrl_cube=8\ntrain.batch=2\ntrain.patch=16\n"
         "train.max_steps=4\ntrain.seed=5\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("train --out /tmp/x").exit_code == 2);  // missing --data
  CHECK(run_cli("definitely-not-a-command").exit_code == 2);
  CHECK(run_cli("synth").exit_code == 2);
}

TEST_CASE("help exits cleanly") {
  const RunOutput help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.text.find("synth") != std::string::npos);
}

TEST_CASE("synth determinism and pairing") {
  const fs::path bgs = make_backgrounds("bgs", 2, 48, 64);
  const fs::path out1 = temp_dir("synth1");
  const fs::path out2 = temp_dir("synth2");
  const std::string common = "--backgrounds " + bgs.string() +
                             " --count 3 --seed 9 --density 0.01 --length-range 9:15 "
                             "--base-width 64";
  CHECK(run_cli("synth " + common + " --out " + out1.string()).exit_code == 0);
  CHECK(run_cli("synth " + common + " --out " + out2.string()).exit_code == 0);

  for (const char* sub : {"rain", "gt"}) {
    int count = 0;
    for (const auto& e : fs::directory_iterator(out1 / sub)) {
      ++count;
      CHECK(fs::exists(out2 / sub / e.path().filename()));
      CHECK(read_bytes(e.path()) == read_bytes(out2 / sub / e.path().filename()));
    }
    CHECK(count == 3);
  }
  CHECK(fs::exists(out1 / "manifest.txt"));

  SUBCASE("zero density reproduces the background in both subdirectories") {
    const fs::path out3 = temp_dir("synth3");
    CHECK(run_cli("synth --backgrounds " + bgs.string() + " --count 2 --seed 1 --density 0 --out " +
                  out3.string())
              .exit_code == 0);
    for (int i = 0; i < 2; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%05d.png", i);
      CHECK(read_bytes(out3 / "rain" / buf) == read_bytes(out3 / "gt" / buf));
    }
  }

  SUBCASE("empty background dir is a runtime error") {
    const fs::path empty = temp_dir("empty_bgs");
    CHECK(run_cli("synth --backgrounds " + empty.string() + " --count 1 --out " +
                  temp_dir("synth4").string())
              .exit_code == 1);
  }
}

TEST_CASE("train / infer / eval workflow") {
  const fs::path bgs = make_backgrounds("wf_bgs", 2, 48, 48);
  const fs::path data = temp_dir("wf_data");
  REQUIRE(run_cli("synth --backgrounds " + bgs.string() + " --count 4 --seed 3 --density 0.01 " +
                  "--base-width 48 --out " + data.string())
              .exit_code == 0);

  const fs::path cfg_file = temp_dir("wf_cfg") / "toy.cfg";
  std::ofstream(cfg_file) << toy_config_text();

  const fs::path train_out = temp_dir("wf_train");
  const RunOutput tr = run_cli("train --data " + data.string() + " --config " + cfg_file.string() +
                               " --out " + train_out.string() + " --lr 0.0005");
  CHECK(tr.exit_code == 0);
  CHECK(fs::exists(train_out / "log.csv"));
  const fs::path ckpt = train_out / "checkpoint_final.udrm";
  REQUIRE(fs::exists(ckpt));

  SUBCASE("flag overrides the config file in the resolved echo") {
    std::ifstream echo(train_out / "config_resolved.txt");
    std::string text((std::istreambuf_iterator<char>(echo)), std::istreambuf_iterator<char>());
    CHECK(text.find("train.lr=0.0005") != std::string::npos);
  }

  SUBCASE("infer produces same-size output; degenerate tiling is bit-exact") {
    const fs::path in_img = data / "rain" / "00000.png";
    const fs::path out_a = temp_dir("wf_infer_a") / "out.png";
    const fs::path out_b = temp_dir("wf_infer_b") / "out.png";
    CHECK(run_cli("infer --checkpoint " + ckpt.string() + " --input " + in_img.string() +
                  " --output " + out_a.string())
              .exit_code == 0);
    // Tile larger than the image: identical path, identical bytes.
    CHECK(run_cli("infer --checkpoint " + ckpt.string() + " --input " + in_img.string() +
                  " --output " + out_b.string() + " --tile 64 --overlap 8")
              .exit_code == 0);
    const image::Image derained = image::read_png(out_a.string());
    CHECK(derained.shape() == Shape4{1, 3, 48, 48});
    CHECK(read_bytes(out_a) == read_bytes(out_b));
  }

  SUBCASE("directory inference and evaluation") {
    const fs::path pred = temp_dir("wf_pred");
    CHECK(run_cli("infer --checkpoint " + ckpt.string() + " --input " + (data / "rain").string() +
                  " --output " + pred.string())
              .exit_code == 0);
    const fs::path report = temp_dir("wf_report") / "report.csv";
    CHECK(run_cli("eval --pred " + pred.string() + " --gt " + (data / "gt").string() +
                  " --report " + report.string())
              .exit_code == 0);
    std::ifstream rf(report);
    std::string header;
    std::getline(rf, header);
    CHECK(header == "id,psnr,ssim,mse");
    int rows = 0;
    std::string line;
    bool has_mean = false;
    while (std::getline(rf, line)) {
      ++rows;
      if (line.rfind("MEAN,", 0) == 0) has_mean = true;
    }
    CHECK(rows == 5);  // 4 images + MEAN
    CHECK(has_mean);
  }

  SUBCASE("eval of gt against itself sits at the psnr cap") {
    const fs::path report = temp_dir("wf_selfreport") / "r.csv";
    const RunOutput ev = run_cli("eval --pred " + (data / "gt").string() + " --gt " +
                                 (data / "gt").string() + " --report " + report.string());
    CHECK(ev.exit_code == 0);
    CHECK(ev.text.find("mean psnr: 100") != std::string::npos);
  }

  SUBCASE("bad checkpoint path is a runtime error") {
    CHECK(run_cli("infer --checkpoint /nonexistent.udrm --input " +
                  (data / "rain" / "00000.png").string() + " --output /tmp/x.png")
              .exit_code == 1);
  }
}

TEST_CASE("report-complexity matches the library accounting") {
  const RunOutput rep = run_cli("report-complexity --height 64 --width 64");
  CHECK(rep.exit_code == 0);
  const std::int64_t want_params = model::count_params(model::ModelConfig{});
  const std::int64_t want_flops = model::estimate_flops(model::ModelConfig{}, 64, 64);
  // The TOTAL row carries exact integers.
  std::istringstream is(rep.text);
  std::string line;
  bool found = false;
  while (std::getline(is, line)) {
    if (line.rfind("TOTAL", 0) == 0) {
      std::istringstream ls(line.substr(5));
      std::int64_t p = 0, f = 0;
      ls >> p >> f;
      CHECK(p == want_params);
      CHECK(f == want_flops);
      found = true;
    }
  }
  CHECK(found);
  CHECK(rep.text.find("4.90 M params") != std::string::npos);
}
