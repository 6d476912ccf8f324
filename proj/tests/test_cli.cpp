#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mcsd/config.hpp"
#include "mcsd/overlay.hpp"
#include "mcsd/png_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("MCSD_CLI");
  return p != nullptr ? p : "";
}

struct RunResult {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunResult run_cli(const std::string& args, const std::string& env = {}) {
  static int counter = 0;
  const fs::path capture = fs::path(testing::TempDir()) / ("cli_capture_" + std::to_string(++counter) + ".txt");
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += "\"" + cli_path() + "\" " + args + " >\"" + capture.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(capture);
  fs::remove(capture);
  return r;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
}

std::string pipeline_config(const fs::path& manifest, const std::string& extra = {}) {
  std::ostringstream os;
  os << "{\n"
     << "  \"seed\": 11,\n"
     << "  \"levels\": 2,\n"
     << "  \"channels\": [4, 8],\n"
     << "  \"stmu\": \"identity\",\n"
     << "  \"stmu_depth\": 1,\n"
     << "  \"atrous_rates\": [1, 2],\n"
     << "  \"heads\": 1,\n"
     << "  \"seq_len\": 6,\n"
     << "  \"input_height\": 32,\n"
     << "  \"input_width\": 32,\n"
     << "  \"epochs\": 2,\n"
     << "  \"batch_size\": 2,\n"
     << "  \"synth_scenes\": 5,\n"
     << "  \"synth_image_size\": 32,\n"
     << "  \"manifest\": \"" << manifest.string() << "\"";
  if (!extra.empty()) os << ",\n" << extra;
  os << "\n}\n";
  return os.str();
}

// Drops the trailing seconds field from every CSV row so wall-clock noise
// does not enter comparisons.
std::string strip_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const size_t cut = line.rfind(',');
    out << (cut == std::string::npos ? line : line.substr(0, cut)) << '\n';
  }
  return out.str();
}

int64_t parse_kv(const std::string& text, const std::string& key) {
  const std::string needle = key + "=";
  const size_t at = text.find(needle);
  if (at == std::string::npos) return -1;
  return std::stoll(text.substr(at + needle.size()));
}

// One synthetic dataset and one trained model, shared by the tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::path(testing::TempDir()) / "mcsd_cli_pipeline");
    fs::remove_all(*root_);
    fs::create_directories(*root_);
    config_ = new fs::path(*root_ / "cfg.json");
    write_file(*config_, pipeline_config(*root_ / "data" / "manifest.csv"));
    ASSERT_FALSE(cli_path().empty()) << "MCSD_CLI is not set";
    RunResult synth = run_cli("synth --config \"" + config_->string() + "\" --out \"" +
                              (*root_ / "data").string() + "\"");
    ASSERT_EQ(synth.code, 0) << synth.output;
    RunResult train = run_cli("train --config \"" + config_->string() + "\" --out \"" +
                              (*root_ / "train").string() + "\"");
    ASSERT_EQ(train.code, 0) << train.output;
  }

  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
    delete config_;
    root_ = nullptr;
    config_ = nullptr;
  }

  static fs::path* root_;
  static fs::path* config_;
};

fs::path* CliPipeline::root_ = nullptr;
fs::path* CliPipeline::config_ = nullptr;

TEST(CliBasics, HelpExitsZero) {
  RunResult r = run_cli("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("train"), std::string::npos);
}

TEST(CliBasics, MissingSubcommandExitsOne) {
  RunResult r = run_cli("");
  EXPECT_EQ(r.code, 1);
}

TEST(CliBasics, MissingRequiredFlagExitsOne) {
  RunResult r = run_cli("train");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--config"), std::string::npos);
}

TEST(CliBasics, UnknownConfigKeyExitsOneNamingKey) {
  const fs::path cfg = fs::path(testing::TempDir()) / "bad_key.json";
  write_file(cfg, "{\"lerning_rate\": 0.1}\n");
  RunResult r = run_cli("synth --config \"" + cfg.string() + "\"");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("lerning_rate"), std::string::npos);
}

TEST(CliBasics, GarbageConfigExitsOne) {
  const fs::path cfg = fs::path(testing::TempDir()) / "garbage.json";
  write_file(cfg, "not json at all\n");
  RunResult r = run_cli("synth --config \"" + cfg.string() + "\"");
  EXPECT_EQ(r.code, 1);
}

TEST(CliBasics, MissingManifestExitsTwo) {
  const fs::path cfg = fs::path(testing::TempDir()) / "no_manifest.json";
  write_file(cfg, "{\"manifest\": \"/nonexistent/manifest.csv\"}\n");
  RunResult r = run_cli("train --config \"" + cfg.string() + "\"");
  EXPECT_EQ(r.code, 2);
}

TEST(CliBasics, UnknownVerifySuiteExitsOne) {
  RunResult r = run_cli("verify --suite bogus");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("unknown verify suite"), std::string::npos);
}

TEST(CliVerify, MetricsAndShapeSuitesPass) {
  RunResult r = run_cli("verify --suite metrics");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("[PASS] metrics/loop_oracle"), std::string::npos);
  RunResult s = run_cli("verify --suite shape");
  EXPECT_EQ(s.code, 0) << s.output;
  EXPECT_NE(s.output.find("[PASS] shape/dsta"), std::string::npos);
  EXPECT_EQ(s.output.find("[FAIL]"), std::string::npos);
}

TEST(CliVerify, GradSuitePassesAndSkewedSeamFails) {
  RunResult ok = run_cli("verify --suite grad");
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("[PASS] grad/focal_loss"), std::string::npos);
  RunResult broken = run_cli("verify --suite grad --focal-grad-scale -1");
  EXPECT_EQ(broken.code, 3) << broken.output;
  EXPECT_NE(broken.output.find("[FAIL] grad/focal_loss"), std::string::npos);
  EXPECT_NE(broken.output.find("[PASS] grad/conv2d"), std::string::npos);
}

TEST(CliBasics, OutRootEnvSetsDefaultOutputDir) {
  const fs::path root = fs::path(testing::TempDir()) / "mcsd_out_root";
  fs::remove_all(root);
  const fs::path cfg = fs::path(testing::TempDir()) / "out_root_cfg.json";
  write_file(cfg, "{\"synth_scenes\": 1, \"synth_image_size\": 16}\n");
  RunResult r = run_cli("synth --config \"" + cfg.string() + "\"",
                        "MCSD_OUT_ROOT=\"" + root.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "synth" / "manifest.csv"));
  fs::remove_all(root);
}

TEST_F(CliPipeline, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(*root_ / "train" / "best.ckpt"));
  EXPECT_TRUE(fs::exists(*root_ / "train" / "last.ckpt"));
  EXPECT_TRUE(fs::exists(*root_ / "train" / "config.json"));
  const std::string log = slurp(*root_ / "train" / "log.csv");
  EXPECT_NE(log.find("epoch,train_loss,val_loss,lr,seconds"), std::string::npos);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const std::string echo = slurp(*root_ / "train" / "config.json");
  EXPECT_NE(echo.find("\"stmu\": \"identity\""), std::string::npos);
}

TEST_F(CliPipeline, EvalReportsSelfConsistentCounts) {
  RunResult r = run_cli("eval --config \"" + config_->string() + "\" --checkpoint \"" +
                        (*root_ / "train" / "best.ckpt").string() + "\" --bins \"" +
                        (*root_ / "eval" / "bins.csv").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("overall"), std::string::npos);
  const int64_t samples = parse_kv(r.output, "samples");
  const int64_t total = parse_kv(r.output, "tp") + parse_kv(r.output, "fp") +
                        parse_kv(r.output, "fn") + parse_kv(r.output, "tn");
  EXPECT_EQ(samples, 2);
  EXPECT_EQ(total, samples * 6 * 32 * 32);
  const std::string bins = slurp(*root_ / "eval" / "bins.csv");
  EXPECT_NE(bins.find("bin_lo,bin_hi,samples,tp,fp,fn,tn,pod,far,csi"), std::string::npos);
  EXPECT_EQ(std::count(bins.begin(), bins.end(), '\n'), 7);
}

TEST_F(CliPipeline, PredictWritesOneMaskPerFrame) {
  const fs::path out = *root_ / "predict_plain";
  RunResult r = run_cli("predict --config \"" + config_->string() + "\" --checkpoint \"" +
                        (*root_ / "train" / "best.ckpt").string() + "\" --out \"" + out.string() +
                        "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  size_t masks = 0;
  for (const auto& e : fs::directory_iterator(out)) masks += e.path().string().find("_mask.png") != std::string::npos;
  EXPECT_EQ(masks, 12u);
  mcsd::ImageU8 img = mcsd::read_png_gray((out / "seq000_f00_mask.png").string());
  EXPECT_EQ(img.height, 32);
  EXPECT_EQ(img.width, 32);
}

TEST_F(CliPipeline, OverlayFlagAddsRgbImages) {
  const fs::path out = *root_ / "predict_overlay";
  RunResult r = run_cli("predict --config \"" + config_->string() + "\" --checkpoint \"" +
                        (*root_ / "train" / "best.ckpt").string() + "\" --out \"" + out.string() +
                        "\" --overlay");
  ASSERT_EQ(r.code, 0) << r.output;
  size_t overlays = 0, masks = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    overlays += e.path().string().find("_overlay.png") != std::string::npos;
    masks += e.path().string().find("_mask.png") != std::string::npos;
  }
  EXPECT_EQ(masks, 12u);
  EXPECT_EQ(overlays, 12u);
  mcsd::ImageU8 img = mcsd::read_png_gray((out / "seq001_f05_overlay.png").string());
  EXPECT_EQ(img.height, 32);
  EXPECT_EQ(img.width, 32);
}

TEST_F(CliPipeline, TrainingIsDeterministicAcrossProcesses) {
  const fs::path rerun = *root_ / "train_rerun";
  RunResult r = run_cli("train --config \"" + config_->string() + "\" --out \"" + rerun.string() +
                        "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(strip_seconds(slurp(rerun / "log.csv")), strip_seconds(slurp(*root_ / "train" / "log.csv")));
  EXPECT_EQ(slurp(rerun / "last.ckpt"), slurp(*root_ / "train" / "last.ckpt"));
  EXPECT_EQ(slurp(rerun / "best.ckpt"), slurp(*root_ / "train" / "best.ckpt"));
}

TEST_F(CliPipeline, SeedFlagOverridesConfigSeed) {
  const fs::path out = *root_ / "train_seed12";
  RunResult r = run_cli("train --config \"" + config_->string() + "\" --seed 12 --out \"" +
                        out.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(slurp(out / "last.ckpt"), slurp(*root_ / "train" / "last.ckpt"));
}

TEST_F(CliPipeline, MismatchedDtypeCheckpointExitsTwo) {
  const fs::path cfg = *root_ / "cfg_f64.json";
  write_file(cfg, pipeline_config(*root_ / "data" / "manifest.csv", "  \"dtype\": \"f64\""));
  RunResult r = run_cli("eval --config \"" + cfg.string() + "\" --checkpoint \"" +
                        (*root_ / "train" / "best.ckpt").string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("dtype"), std::string::npos);
}

TEST_F(CliPipeline, DoublePrecisionTrainingRuns) {
  const fs::path cfg = *root_ / "cfg_f64_train.json";
  write_file(cfg, pipeline_config(*root_ / "data" / "manifest.csv",
                                  "  \"dtype\": \"f64\",\n  \"epochs\": 1"));
  const fs::path out = *root_ / "train_f64";
  RunResult r = run_cli("train --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "last.ckpt"));
}

TEST(RunConfig, DefaultsValidate) {
  mcsd::RunConfig rc;
  EXPECT_NO_THROW(rc.validate());
  EXPECT_EQ(rc.model_config().stmu_kind, mcsd::StmuKind::Dsta);
  EXPECT_EQ(rc.adam_config().lr, 0.001);
  EXPECT_EQ(rc.plateau_config().patience, 3);
  EXPECT_EQ(rc.focal_config().gamma, 2.0);
}

TEST(RunConfig, ParseOverridesOnlyListedKeys) {
  mcsd::RunConfig rc = mcsd::parse_run_config({{"lr", 0.01}, {"stmu", "conv3d"}});
  EXPECT_EQ(rc.lr, 0.01);
  EXPECT_EQ(rc.stmu, "conv3d");
  EXPECT_EQ(rc.epochs, 10);
  EXPECT_EQ(rc.channels, (std::vector<int64_t>{16, 32, 64, 128}));
}

TEST(RunConfig, UnknownKeyIsNamed) {
  try {
    mcsd::parse_run_config({{"bogus_knob", 1}});
    FAIL() << "expected ConfigError";
  } catch (const mcsd::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus_knob"), std::string::npos);
  }
}

TEST(RunConfig, WrongTypeIsNamed) {
  try {
    mcsd::parse_run_config({{"channels", "wide"}});
    FAIL() << "expected ConfigError";
  } catch (const mcsd::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(RunConfig, EchoRoundTrips) {
  mcsd::RunConfig rc;
  rc.seed = 99;
  rc.stmu = "tformer";
  rc.atrous_rates = {1, 3, 5};
  mcsd::RunConfig back = mcsd::parse_run_config(mcsd::run_config_to_json(rc));
  EXPECT_EQ(mcsd::run_config_to_json(back), mcsd::run_config_to_json(rc));
}

TEST(RunConfig, RejectsBadDtypeAndBadStmu) {
  mcsd::RunConfig rc;
  rc.dtype = "f16";
  EXPECT_THROW(rc.validate(), mcsd::ConfigError);
  rc.dtype = "f32";
  rc.stmu = "gru";
  EXPECT_THROW(rc.validate(), mcsd::ConfigError);
}

TEST(Overlay, ColorsEncodeTheConfusionQuadrants) {
  auto img = mcsd::Tensor<float>::from({2, 2}, {0.0f, 0.2f, 0.4f, 0.6f});
  auto pred = mcsd::Tensor<float>::from({2, 2}, {1, 0, 1, 0});
  auto gt = mcsd::Tensor<float>::from({2, 2}, {1, 1, 0, 0});
  mcsd::ImageU8 rgb = mcsd::overlay_frame(img, pred, gt);
  ASSERT_EQ(rgb.channels, 3);
  const uint8_t* p = rgb.pixels.data();
  EXPECT_EQ(p[0], 0);
  EXPECT_EQ(p[1], 255);
  EXPECT_EQ(p[2], 0);
  EXPECT_EQ(p[3], 255);
  EXPECT_EQ(p[4], 0);
  EXPECT_EQ(p[5], 0);
  EXPECT_EQ(p[6], 0);
  EXPECT_EQ(p[7], 0);
  EXPECT_EQ(p[8], 255);
  EXPECT_EQ(p[9], 153);
  EXPECT_EQ(p[10], 153);
  EXPECT_EQ(p[11], 153);
}

TEST(Overlay, RejectsNonBinaryInputs) {
  auto img = mcsd::Tensor<float>::from({1, 2}, {0.5f, 0.5f});
  auto half = mcsd::Tensor<float>::from({1, 2}, {0.5f, 0.0f});
  auto ok = mcsd::Tensor<float>::from({1, 2}, {1, 0});
  EXPECT_THROW(mcsd::overlay_frame(img, half, ok), mcsd::DataError);
  EXPECT_THROW(mcsd::overlay_frame(img, ok, half), mcsd::DataError);
  EXPECT_THROW(mcsd::mask_to_image(half), mcsd::DataError);
}

TEST(Overlay, MaskToImageMapsToBlackAndWhite) {
  auto mask = mcsd::Tensor<double>::from({1, 3}, {1, 0, 1});
  mcsd::ImageU8 img = mcsd::mask_to_image(mask);
  ASSERT_EQ(img.channels, 1);
  EXPECT_EQ(img.pixels, (std::vector<uint8_t>{255, 0, 255}));
}

}  // namespace
