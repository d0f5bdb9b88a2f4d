#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "vesselforge/binary_io.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/train.hpp"

namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  fs::path data;
  fs::path out;
  Workspace() {
    static int counter = 0;
    root = fs::temp_directory_path() / ("vf_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    data = root / "data";
    out = root / "run";
    fs::create_directories(root);
    vf::testing::write_synthetic_drive(data, 3, 2, 64, 7);
  }
  ~Workspace() { fs::remove_all(root); }

  std::string common() const {
    return " --data " + data.string() + " --out " + out.string() +
           " --patch 16 --n-per-image 20 --base-channels 2 --epochs 2 --batch-size 8 --stride 8";
  }
  int run(const std::string& args, std::string* err = nullptr) const {
    const auto log = root / "stderr.txt";
    const std::string cmd = std::string(VF_CLI_PATH) + " " + args + " >" + (root / "stdout.txt").string() + " 2>" +
                            log.string();
    const int status = std::system(cmd.c_str());
    if (err) *err = slurp(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  int stage(const std::string& name, const std::string& extra = "", std::string* err = nullptr) const {
    return run(name + common() + " " + extra, err);
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST(Cli, ParamCountDefaults) {
  Workspace ws;
  ASSERT_EQ(ws.run("paramcount"), 0);
  EXPECT_EQ(Workspace::slurp(ws.root / "stdout.txt"), "465953\n");
  ASSERT_EQ(ws.run("paramcount --base-channels 4"), 0);
  EXPECT_EQ(Workspace::slurp(ws.root / "stdout.txt"), "7397\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  Workspace ws;
  EXPECT_EQ(ws.run("frobnicate"), 2);
  EXPECT_EQ(ws.run("extract --patch"), 2);
  EXPECT_EQ(ws.stage("preprocess", "--clahe-tiles 8by8"), 2);
  EXPECT_EQ(ws.stage("preprocess", "--se-shape hexagon"), 2);
  EXPECT_EQ(ws.run("preprocess --out " + ws.out.string() + " --patch 18"), 2);
}

TEST(Cli, FullPipeline) {
  Workspace ws;
  ASSERT_EQ(ws.stage("preprocess"), 0);
  EXPECT_EQ(count_files(ws.out / "preprocessed" / "training", ".pgm"), 3u);
  EXPECT_EQ(count_files(ws.out / "preprocessed" / "test", ".pgm"), 2u);
  const auto first = Workspace::slurp(ws.out / "preprocessed" / "training" / "21_training.pgm");
  ASSERT_EQ(ws.stage("preprocess"), 0);
  EXPECT_EQ(Workspace::slurp(ws.out / "preprocessed" / "training" / "21_training.pgm"), first);

  ASSERT_EQ(ws.stage("extract"), 0);
  EXPECT_EQ(vf::load_patches(ws.out / "patches.bin").size(), 60u);

  std::string err;
  ASSERT_EQ(ws.stage("train", "", &err), 0) << err;
  EXPECT_NE(err.find("epoch 2/2"), std::string::npos);
  EXPECT_EQ(vf::load_history(ws.out / "history.csv").size(), 2u);

  ASSERT_EQ(ws.stage("evaluate", "--maps", &err), 0) << err;
  std::ifstream rin(ws.out / "report.json");
  const auto report = nlohmann::json::parse(rin);
  EXPECT_EQ(report.at("images").size(), 2u);
  const auto& roc = report.at("pooled").at("roc");
  EXPECT_EQ(roc.front(), nlohmann::json::array({0.0, 0.0}));
  EXPECT_EQ(roc.back(), nlohmann::json::array({1.0, 1.0}));
  const auto auc = report.at("pooled").at("auc").get<double>();
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  EXPECT_TRUE(fs::exists(ws.out / "maps" / "01_test_prob.pgm"));

  ASSERT_EQ(ws.stage("predict", "--stride 16"), 0);
  const auto prob = vf::load_raster(ws.out / "maps" / "02_test_prob.pgm");
  EXPECT_EQ(prob.width, 64);
  const auto bin = vf::load_raster(ws.out / "maps" / "02_test_bin.pgm");
  for (auto v : bin.data) ASSERT_TRUE(v == 0 || v == 255);

  ASSERT_EQ(ws.run("plot " + (ws.out / "history.csv").string() + " -o " + (ws.root / "h.svg").string()), 0);
  const auto svg = Workspace::slurp(ws.root / "h.svg");
  const auto pos = svg.find("data-label=\"train\"");
  ASSERT_NE(pos, std::string::npos);
  const auto pts_at = svg.find("points=\"", pos) + 8;
  const auto pts = svg.substr(pts_at, svg.find('"', pts_at) - pts_at);
  EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 2);
  ASSERT_EQ(ws.run("plot " + (ws.out / "report.json").string() + " -o " + (ws.root / "r.svg").string()), 0);
  EXPECT_NE(Workspace::slurp(ws.root / "r.svg").find("<polyline"), std::string::npos);
  for (const char* m : {"preprocess", "extract", "train", "evaluate", "predict"})
    EXPECT_TRUE(fs::exists(ws.out / (std::string(m) + ".manifest.json"))) << m;
}

TEST(Cli, TrainingIsReproducibleAndResumable) {
  Workspace ws;
  ASSERT_EQ(ws.stage("preprocess"), 0);
  ASSERT_EQ(ws.stage("extract"), 0);
  ASSERT_EQ(ws.stage("train"), 0);
  const auto a = Workspace::slurp(ws.out / "model.sunw");
  ASSERT_EQ(ws.stage("train"), 0);
  EXPECT_EQ(Workspace::slurp(ws.out / "model.sunw"), a);

  ASSERT_EQ(ws.stage("train", "--epochs 1"), 0);
  std::string err;
  ASSERT_EQ(ws.stage("train", "--resume", &err), 0) << err;
  EXPECT_EQ(err.find("epoch 1/2"), std::string::npos);
  EXPECT_EQ(Workspace::slurp(ws.out / "model.sunw"), a);
  EXPECT_EQ(ws.stage("train", "--resume --lr 0.01"), 2);
}

TEST(Cli, MissingInputsExitThree) {
  Workspace ws;
  std::string err;
  ASSERT_EQ(ws.stage("preprocess"), 0);
  EXPECT_EQ(ws.stage("evaluate", "", &err), 3);
  EXPECT_NE(err.find("model.sunw"), std::string::npos);
  fs::remove(ws.data / "training" / "mask" / "22_training_mask.pgm");
  EXPECT_EQ(ws.stage("preprocess", "", &err), 3);
  EXPECT_NE(err.find("22_training"), std::string::npos) << err;
  EXPECT_EQ(ws.run("preprocess --out " + ws.out.string() + " --data " + (ws.root / "nowhere").string()), 3);
}

TEST(Cli, StaleArtifactsAreRejected) {
  Workspace ws;
  ASSERT_EQ(ws.stage("preprocess"), 0);
  std::string err;
  EXPECT_EQ(ws.stage("extract", "--se-radius 5", &err), 2);
  EXPECT_NE(err.find("StaleArtifact"), std::string::npos) << err;
  ASSERT_EQ(ws.stage("extract"), 0);
  {
    std::fstream f(ws.out / "patches.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  EXPECT_EQ(ws.stage("train", "", &err), 2);
  EXPECT_NE(err.find("changed"), std::string::npos) << err;
}

TEST(Cli, ConfigFileAndEnvironmentFallback) {
  Workspace ws;
  const auto cfg = ws.root / "run.json";
  vf::bin::write_text_atomic(cfg, R"({"patching": {"size": 16, "n_per_image": 5}, "model": {"base_channels": 2}})");
  const std::string env = "VESSELFORGE_DATA=" + ws.data.string() + " ";
  const std::string cmd = env + VF_CLI_PATH + std::string(" preprocess --config ") + cfg.string() + " --out " +
                          ws.out.string() + " 2>/dev/null";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  ASSERT_EQ(ws.run("extract --config " + cfg.string() + " --data " + ws.data.string() + " --out " + ws.out.string() +
                   " --n-per-image 7"),
            0);
  EXPECT_EQ(vf::load_patches(ws.out / "patches.bin").size(), 21u);

  vf::bin::write_text_atomic(cfg, R"({"patching": {"sise": 16}})");
  std::string err;
  EXPECT_EQ(ws.run("paramcount --config " + cfg.string(), &err), 2);
  EXPECT_NE(err.find("sise"), std::string::npos);
}

TEST(Cli, PlotRejectsMalformedHistory) {
  Workspace ws;
  const auto csv = ws.root / "bad.csv";
  vf::bin::write_text_atomic(csv, "epoch,lr,train_loss,train_acc,val_loss,val_acc\n1,0.001,0.5,0.8,0.4,0.8\n2,x,0.4,0.8,0.4,0.8\n");
  std::string err;
  EXPECT_EQ(ws.run("plot " + csv.string(), &err), 2);
  EXPECT_NE(err.find(":3"), std::string::npos) << err;
  EXPECT_NE(err.find("ParseError"), std::string::npos) << err;
  EXPECT_EQ(ws.run("plot " + (ws.root / "none.csv").string()), 3);
}
