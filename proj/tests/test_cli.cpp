#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "lfn/flowio.hpp"
#include "lfn/gradsuite.hpp"
#include "lfn/trainconfig.hpp"

using namespace lfn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lfn_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code = -1;
  std::string out;
};

Run lfn_cli(const std::string& args, const TempDir& dir) {
  const std::string log = dir.file("stdout.txt");
  const std::string cmd = std::string("\"") + LFN_CLI + "\" " + args + " > \"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = fixture::tiny_config(6, 4, false);
  c.iterations = 8;
  c.batch = 1;
  c.data.train_samples = 3;
  c.data.test_samples = 2;
  c.data.crop = 32;
  c.data.synthetic.extent = 32;
  c.options.log_every = 4;
  c.options.final_window = 2;
  c.options.loss.gt_scale = 1.0;
  return c;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("training config json round trip") {
  TrainConfig c = tiny_train_config();
  c.schedule = "conventional";
  c.data.noise = 0.02;
  c.options.loss.kind = LossKind::kL2;
  c.options.loss.level_weights = {{6, 1.0}, {5, 0.5}};
  c.options.adam.beta1 = 0.9;
  const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK(back.options.loss.kind == LossKind::kL2);
  CHECK(back.options.loss.level_weights.size() == 2);
  CHECK(back.data.noise == 0.02);
  CHECK(back.model.finest_level == 4);
}

TEST_CASE("missing keys keep defaults") {
  const TrainConfig c = nlohmann::json::parse(R"({"iterations": 12})").get<TrainConfig>();
  CHECK(c.iterations == 12);
  CHECK(c.batch == 4);
  CHECK(c.data.crop == 64);
  CHECK(c.data.noise == 0.0);
  CHECK(c.schedule == "stagewise");
  CHECK(c.model.pseudo_level2);
}

TEST_CASE("training config validation") {
  TrainConfig c = tiny_train_config();
  c.schedule = "cyclic";
  CHECK_THROWS_AS(c.validate(), FormatError);
  c = tiny_train_config();
  c.data.crop = 48;
  CHECK_THROWS_AS(c.validate(), DimensionError);
  c = tiny_train_config();
  c.data.noise = -1.0;
  CHECK_THROWS_AS(c.validate(), DimensionError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"loss": {"kind": "huber"}})").get<TrainConfig>(), FormatError);
  CHECK_THROWS_AS(load_train_config("/nonexistent/cfg.json"), IOError);
}

TEST_CASE("shipped configs load") {
  const fs::path dir = LFN_CONFIG_DIR;
  const TrainConfig desk = load_train_config((dir / "desk.json").string());
  CHECK(desk.model.coarsest_level == 6);
  CHECK(desk.model.finest_level == 4);
  CHECK(desk.data.noise == 0.0);
  CHECK(desk.iterations <= 20000);
  const ModelConfig full = load_model_config((dir / "liteflownet2.json").string());
  CHECK(nlohmann::json(full) == nlohmann::json(ModelConfig::liteflownet2()));
}

TEST_CASE("gradient suite names and selection") {
  CHECK(gradient_suite_ops().size() == 11);
  const auto one = run_gradient_suite(2, "charbonnier");
  REQUIRE(one.size() == 1);
  CHECK(one[0].passed());
  CHECK_THROWS_AS(run_gradient_suite(1, "softmax"), UsageError);
}

TEST_CASE("eval of identical files") {
  TempDir d;
  const Tensor f = random_uniform({1, 2, 6, 9}, 3, -4, 4);
  write_flo(d.file("gt.flo"), f);
  const Run r = lfn_cli("eval --est " + d.file("gt.flo") + " --gt " + d.file("gt.flo"), d);
  CHECK(r.code == 0);
  CHECK(r.out.find("AEE 0.0000 px") != std::string::npos);
  const std::string json = r.out.substr(r.out.find('{'));
  const nlohmann::json j = nlohmann::json::parse(json);
  CHECK(j.at("aee") == 0.0);
  CHECK(j.at("fl_all") == 0.0);
  CHECK(j.at("out_noc").is_null());
  CHECK(j.at("pixels") == 54);
}

TEST_CASE("eval against KITTI ground truth with a mask") {
  TempDir d;
  Tensor gt({1, 2, 4, 4});
  Tensor valid({1, 1, 4, 4}, 1.0);
  valid.at(0, 0, 0, 0) = 0.0;
  write_kitti_png(d.file("gt.png"), gt, valid);
  Tensor est({1, 2, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) est.at(0, 0, y, x) = 4.0;
  write_flo(d.file("est.flo"), est);
  write_png(d.file("noc.png"), Tensor({1, 1, 4, 4}, 1.0));
  const Run r = lfn_cli("eval --json --est " + d.file("est.flo") + " --gt " + d.file("gt.png") + " --noc " + d.file("noc.png"), d);
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  CHECK(j.at("aee") == 4.0);
  CHECK(j.at("fl_all") == 100.0);
  CHECK(j.at("out_noc") == 100.0);
  CHECK(j.at("pixels") == 15);
}

TEST_CASE("exit codes") {
  TempDir d;
  CHECK(lfn_cli("", d).code == 2);
  CHECK(lfn_cli("bogus", d).code == 2);
  CHECK(lfn_cli("eval --est " + d.file("missing.flo") + " --gt " + d.file("missing.flo"), d).code == 2);
  CHECK(lfn_cli("gradcheck --op nope", d).code == 2);
  CHECK(lfn_cli("gradcheck --op leaky_relu", d).code == 0);
  CHECK(lfn_cli("export-bases --unit r --out " + d.file("b"), d).code == 2);
  CHECK(lfn_cli("--help", d).code == 0);
  std::ofstream(d.file("bad.flo")) << "not a flow file";
  CHECK(lfn_cli("viz " + d.file("bad.flo") + " " + d.file("x.png"), d).code == 1);
  std::ofstream(d.file("bad.json")) << "{ nope";
  CHECK(lfn_cli("params --config " + d.file("bad.json"), d).code == 1);
}

TEST_CASE("params on the default network") {
  TempDir d;
  const Run r = lfn_cli("params --config " + std::string(LFN_CONFIG_DIR) + "/liteflownet2.json", d);
  CHECK(r.code == 0);
  CHECK(r.out.find("total parameters 6402695") != std::string::npos);
  CHECK(r.out.find("learnable layers 91") != std::string::npos);
  CHECK(r.out.find("level 5: cost volume 49, M in 49, S in 258, R in 131, distance 9") != std::string::npos);
}

TEST_CASE("viz writes a png of the flow extent") {
  TempDir d;
  write_flo(d.file("f.flo"), random_uniform({1, 2, 5, 8}, 4, -3, 3));
  CHECK(lfn_cli("viz " + d.file("f.flo") + " " + d.file("f.png") + " --max-mag 4", d).code == 0);
  const Tensor img = read_image(d.file("f.png"));
  CHECK(img.shape() == Shape{1, 3, 5, 8});
  CHECK(lfn_cli("viz " + d.file("f.flo") + " " + d.file("g.png") + " --max-mag -1", d).code == 2);
}

TEST_CASE("train, infer and export from the checkpoint") {
  TempDir d;
  std::ofstream(d.file("cfg.json")) << nlohmann::json(tiny_train_config()).dump();
  const Run t = lfn_cli("train --config " + d.file("cfg.json") + " --out " + d.file("run"), d);
  REQUIRE(t.code == 0);
  CHECK(t.out.find("held-out AEE") != std::string::npos);
  for (const char* f : {"model.ckpt", "config.json", "loss.csv", "summary.json"})
    CHECK(fs::exists(d.path / "run" / f));
  std::ifstream csv(d.file("run/loss.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 1 + 8);

  const SyntheticSample s = crop_sample(generate_synthetic(2, 1, {.extent = 64})[0], 3, 5, 40, 40);
  write_png(d.file("a.png"), s.image1);
  write_png(d.file("b.png"), s.image2);
  const std::string infer = "infer " + d.file("a.png") + " " + d.file("b.png") + " --model " + d.file("run/model.ckpt");
  REQUIRE(lfn_cli(infer + " --out " + d.file("o1.flo") + " --viz " + d.file("o1.png"), d).code == 0);
  REQUIRE(lfn_cli(infer + " --out " + d.file("o2.flo"), d).code == 0);
  CHECK(slurp(d.file("o1.flo")) == slurp(d.file("o2.flo")));
  CHECK(read_flo(d.file("o1.flo")).shape() == Shape{1, 2, 40, 40});
  CHECK(fs::exists(d.file("o1.png")));

  // The sidecar config is required to rebuild the narrow network.
  CHECK(lfn_cli(infer + " --config " + std::string(LFN_CONFIG_DIR) + "/liteflownet2.json --out " + d.file("o3.flo"), d).code == 1);

  const Run e = lfn_cli("export-bases --model " + d.file("run/model.ckpt") + " --unit m --level 4 --scale 2 --out " + d.file("bases"), d);
  CHECK(e.code == 0);
  CHECK(fs::exists(d.file("bases/m4_u.png")));
  CHECK(fs::exists(d.file("bases/m4_v.png")));
}

}  // TEST_SUITE
