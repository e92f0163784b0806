#include "scgt/checkpoint.hpp"
#include "scgt/config.hpp"
#include "scgt/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace scgt;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("scgt_io_" + name);
  fs::remove_all(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

ModelConfig small_model(Mode mode = Mode::Scgt) {
  ModelConfig c;
  c.n_nodes = c.d_pe = 4;
  c.layer_dims = {4, 4};
  c.n_heads = 2;
  c.k_r = 2;
  c.mode = mode;
  return c;
}

}  // namespace

TEST(Csv, MatrixRoundTripIsBitExact) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1e3);
  Mat m(7, 5);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng) * std::pow(10.0, static_cast<double>(i % 9) - 4);
  m(0, 0) = 0.1;
  m(0, 1) = -0.0;
  const auto p = scratch("m.csv");
  write_matrix_csv(p, m);
  EXPECT_EQ(read_matrix_csv(p), m);
  fs::remove(p);
}

TEST(Csv, MalformedInputIsIoError) {
  const auto dir = scratch("bad");
  write_text(dir / "ragged.csv", "1,2\n3\n");
  write_text(dir / "text.csv", "1,x\n");
  EXPECT_THROW(read_matrix_csv(dir / "ragged.csv"), IoError);
  EXPECT_THROW(read_matrix_csv(dir / "text.csv"), IoError);
  EXPECT_THROW(read_matrix_csv(dir / "missing.csv"), IoError);
  write_text(dir / "asym.csv", "1,0.5\n0.4,1\n");
  EXPECT_THROW(read_fc_csv(dir / "asym.csv"), ValidationError);
  fs::remove_all(dir);
}

TEST(Manifest, RoundTripAndRelativePaths) {
  const auto dir = scratch("manifest");
  const std::vector<ManifestRow> rows{{"a", "fc/a.csv", 0.25, "g1"}, {"b", "/abs/b.csv", -3.0, ""}};
  write_manifest(dir / "manifest.csv", rows);
  const auto back = read_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].subject_id, "a");
  EXPECT_EQ(back[0].target, 0.25);
  EXPECT_EQ(back[0].group_label, "g1");
  EXPECT_EQ(back[1].target, -3.0);
  EXPECT_EQ(resolve_relative(dir / "manifest.csv", back[0].fc_path), dir / "fc/a.csv");
  EXPECT_EQ(resolve_relative(dir / "manifest.csv", back[1].fc_path), fs::path("/abs/b.csv"));

  write_text(dir / "bad_header.csv", "id,path,y\n");
  EXPECT_THROW(read_manifest(dir / "bad_header.csv"), IoError);
  write_text(dir / "bad_target.csv", "subject_id,fc_path,target\na,x.csv,oops\n");
  EXPECT_THROW(read_manifest(dir / "bad_target.csv"), IoError);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (Mode mode : {Mode::Scgt, Mode::VanillaGt}) {
    Checkpoint ck;
    ck.config = small_model(mode);
    ck.params = init_params(ck.config, 9);
    ck.scaler = {1.0 / 3.0, 2.718281828459045};
    ck.threshold = 0.2;
    const auto p = scratch("ck.json");
    save_checkpoint(ck, p);
    const Checkpoint back = load_checkpoint(p);
    EXPECT_EQ(back.config.layer_dims, ck.config.layer_dims);
    EXPECT_EQ(back.config.mode, mode);
    EXPECT_EQ(back.scaler.mean, ck.scaler.mean);
    EXPECT_EQ(back.scaler.scale, ck.scaler.scale);
    EXPECT_EQ(back.threshold, 0.2);
    std::vector<std::vector<double>> a, b;
    for_each_tensor(ck.params, [&](const std::string&, const auto& t) { a.emplace_back(t.data(), t.data() + t.size()); });
    for_each_tensor(back.params, [&](const std::string&, const auto& t) { b.emplace_back(t.data(), t.data() + t.size()); });
    EXPECT_EQ(a, b);
    fs::remove(p);
  }
}

TEST(Checkpoint, RejectsBrokenFiles) {
  Checkpoint ck;
  ck.config = small_model();
  ck.params = init_params(ck.config, 1);
  const nlohmann::json good = checkpoint_to_json(ck);

  auto missing = good;
  missing["tensors"].erase(0);
  EXPECT_THROW(checkpoint_from_json(missing), IoError);

  auto wrong_shape = good;
  wrong_shape["tensors"][0]["shape"] = {1, 1};
  EXPECT_THROW(checkpoint_from_json(wrong_shape), IoError);

  auto extra = good;
  extra["tensors"].push_back({{"name", "stray"}, {"shape", {1, 1}}, {"data", {0.0}}});
  EXPECT_THROW(checkpoint_from_json(extra), IoError);

  auto format = good;
  format["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_json(format), IoError);

  const auto dir = scratch("ckbad");
  write_text(dir / "garbage.json", "{ not json");
  EXPECT_THROW(load_checkpoint(dir / "garbage.json"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "absent.json"), IoError);
  fs::remove_all(dir);
}

TEST(Config, ParsesCommentsAndOverridesInOrder) {
  RunConfig cfg;
  std::istringstream text(
      "# model\n"
      "model.layer_dims = 16, 16\n"
      "  model.mode=vanilla-gt\n"
      "\n"
      "train.lr = 0.01\n"
      "train.lr = 0.002\n"
      "synth.community_sizes = 24,16,12,8\n"
      "train.all_folds = true\n");
  apply_config_text(cfg, text);
  EXPECT_EQ(cfg.model.layer_dims, (std::vector<int>{16, 16}));
  EXPECT_EQ(cfg.model.mode, Mode::VanillaGt);
  EXPECT_EQ(cfg.train.lr, 0.002);
  EXPECT_EQ(cfg.synth.community_sizes, (std::vector<int>{24, 16, 12, 8}));
  EXPECT_TRUE(cfg.all_folds);
  apply_assignment(cfg, "train.lr=0.5");
  EXPECT_EQ(cfg.train.lr, 0.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "train.learning_rate", "1"), ValidationError);
  EXPECT_THROW(set_config_value(cfg, "train.lr", "fast"), ValidationError);
  EXPECT_THROW(set_config_value(cfg, "train.all_folds", "maybe"), ValidationError);
  EXPECT_THROW(set_config_value(cfg, "model.mode", "transformer"), ValidationError);
  EXPECT_THROW(apply_assignment(cfg, "train.lr"), ValidationError);
  std::istringstream text("train.epochs = 3\nbogus = 1\n");
  try {
    apply_config_text(cfg, text, "x.cfg");
    FAIL() << "expected a ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(apply_config_file(cfg, "/nonexistent/x.cfg"), IoError);
}

TEST(Config, ResolvedTextReparsesToItself) {
  RunConfig cfg;
  set_config_value(cfg, "train.lr", "0.1");
  set_config_value(cfg, "synth.rho_in_sd", "0.05");
  set_config_value(cfg, "model.task", "classification");
  set_config_value(cfg, "run.out", "somewhere");
  const std::string text = resolved_config_text(cfg);
  RunConfig again;
  std::istringstream in(text);
  apply_config_text(again, in);
  EXPECT_EQ(resolved_config_text(again), text);
  EXPECT_EQ(again.train.lr, 0.1);
  EXPECT_EQ(again.out, "somewhere");
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  EXPECT_EQ(lines, config_keys().size());
}

TEST(Config, ShippedConfigsParse) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(SCGT_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    RunConfig cfg;
    EXPECT_NO_THROW(apply_config_file(cfg, entry.path())) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 4);
}
