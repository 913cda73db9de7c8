#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gngan/checkpoint.hpp"
#include "gngan/trainer.hpp"

using namespace gngan;

namespace {

Checkpoint trained_checkpoint() {
  TrainConfig cfg;
  cfg.hp.seed = 5;
  cfg.hp.epochs = 1;
  cfg.dataset_size = 512;
  cfg.shape = {2, 2, 8, 2, 8};
  Trainer t(cfg);
  t.run();
  return {kCheckpointVersion, t.model(), t.iteration(), 5, 0x0123456789abcdefULL};
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, c);
  return os.str();
}

Checkpoint parse(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_checkpoint(is);
}

void expect_same_net(const Mlp& a, const Mlp& b) {
  ASSERT_EQ(a.layers.size(), b.layers.size());
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    EXPECT_EQ(a.layers[k].weight, b.layers[k].weight);
    EXPECT_EQ(a.layers[k].bias, b.layers[k].bias);
    EXPECT_EQ(a.layers[k].activation, b.layers[k].activation);
  }
}

void expect_same_adam(const AdamState& a, const AdamState& b) {
  EXPECT_EQ(a.step, b.step);
  EXPECT_EQ(a.lr, b.lr);
  EXPECT_EQ(a.base_lr, b.base_lr);
  EXPECT_EQ(a.beta1, b.beta1);
  EXPECT_EQ(a.beta2, b.beta2);
  EXPECT_EQ(a.epsilon, b.epsilon);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.v, b.v);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = trained_checkpoint();
  const auto bytes = serialize(c);
  const auto back = parse(bytes);
  expect_same_net(c.model.encoder, back.model.encoder);
  expect_same_net(c.model.generator, back.model.generator);
  expect_same_net(c.model.discriminator, back.model.discriminator);
  expect_same_adam(c.model.ae_opt, back.model.ae_opt);
  expect_same_adam(c.model.d_opt, back.model.d_opt);
  expect_same_adam(c.model.g_opt, back.model.g_opt);
  EXPECT_EQ(back.iteration, c.iteration);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.config_hash, 0x0123456789abcdefULL);
  EXPECT_EQ(serialize(back), bytes);
}

TEST(Checkpoint, LayoutHeader) {
  const auto bytes = serialize(trained_checkpoint());
  EXPECT_EQ(bytes.substr(0, 5), "GNGAN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), kCheckpointVersion);
  EXPECT_EQ(bytes[6], 0);
  // First tensor is E.spec: name length 6, then the name.
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 6);
  EXPECT_EQ(bytes.substr(17, 6), "E.spec");
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const auto bytes = serialize(trained_checkpoint());
  for (std::size_t cut = 0; cut < bytes.size(); cut += 1 + cut / 16) {
    EXPECT_THROW(parse(bytes.substr(0, cut)), FormatError) << "cut at " << cut;
  }
  EXPECT_THROW(parse(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(parse(bytes + "x"), FormatError);
}

TEST(Checkpoint, VersionBumpIsUnsupported) {
  auto bytes = serialize(trained_checkpoint());
  bytes[5] = static_cast<char>(kCheckpointVersion + 1);
  try {
    parse(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
  }
}

TEST(Checkpoint, BadMagic) {
  auto bytes = serialize(trained_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(parse(bytes), FormatError);
}

TEST(Checkpoint, FileRoundTripLeavesNoTemporary) {
  const auto dir = std::filesystem::temp_directory_path() / "gngan_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto c = trained_checkpoint();
  save_checkpoint(dir / "c.bin", c);
  EXPECT_FALSE(std::filesystem::exists(dir / "c.bin.tmp"));
  EXPECT_EQ(serialize(load_checkpoint(dir / "c.bin")), serialize(c));
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ConfigHashGuard) {
  const auto c = trained_checkpoint();
  EXPECT_NO_THROW(check_config_hash(c, c.config_hash));
  EXPECT_THROW(check_config_hash(c, c.config_hash + 1), ValueError);
  EXPECT_NO_THROW(check_config_hash(c, c.config_hash + 1, true));
}

TEST(Checkpoint, LoadedModelKeepsTraining) {
  TrainConfig cfg;
  cfg.hp.seed = 8;
  cfg.hp.epochs = 2;
  cfg.dataset_size = 256;
  cfg.shape = {2, 1, 6, 1, 6};
  Trainer straight(cfg);
  straight.run();

  Trainer first(cfg);
  for (int k = 0; k < 2; ++k) first.step();
  const auto restored = parse(serialize({kCheckpointVersion, first.model(), first.iteration(), 8, 0}));
  Trainer resumed(cfg);
  for (int k = 0; k < 2; ++k) resumed.step();  // advance the data and noise streams identically
  resumed.model() = restored.model;
  resumed.set_iteration(restored.iteration);
  resumed.run();
  expect_same_net(resumed.model().generator, straight.model().generator);
  expect_same_net(resumed.model().discriminator, straight.model().discriminator);
}
