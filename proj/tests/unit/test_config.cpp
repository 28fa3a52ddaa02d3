#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "casdet/checkpoint.hpp"
#include "casdet/config.hpp"
#include "casdet/error.hpp"

namespace casdet {
namespace {

ModelSpec toy_spec(Variant v) {
  ModelSpec s = ModelSpec::defaults(v);
  s.width_scale = 0.0625;
  s.gru_hidden = 3;
  return s;
}

TEST(RunConfig, DefaultsRoundTrip) {
  const RunConfig c;
  const RunConfig back = parse_run_config(format_run_config(c));
  EXPECT_EQ(format_run_config(back), format_run_config(c));
  EXPECT_EQ(back.model, c.model);
}

TEST(RunConfig, ParsesKeysAndComments) {
  const RunConfig c = parse_run_config(
      "# toy run\n"
      "seed = 42\n"
      "model.variant = cnn96\n"
      "model.width_scale = 0.25   # quarter width\n"
      "model.gru_hidden = 32\n"
      "train.lr0 = 0.001\n"
      "train.max_epochs = 7\n"
      "merge.max_gap_s = 0.4\n"
      "features.mel_filters = 32\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.model.variant, Variant::kCNN96);
  EXPECT_EQ(c.model.conv_kernels, 96u);
  EXPECT_DOUBLE_EQ(c.model.width_scale, 0.25);
  EXPECT_EQ(c.model.gru_hidden, 32u);
  EXPECT_DOUBLE_EQ(c.train.lr0, 1e-3);
  EXPECT_EQ(c.train.max_epochs, 7u);
  EXPECT_DOUBLE_EQ(c.merge.max_gap_s, 0.4);
  EXPECT_EQ(c.features.mfcc.n_filters, 32u);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("model.colour = red\n"), DataError);
  EXPECT_THROW(parse_run_config("seed 3\n"), DataError);
  EXPECT_THROW(parse_run_config("train.lr0 = fast\n"), DataError);
  EXPECT_THROW(parse_run_config("train.plateau_patience = 60\n"), DataError);
  EXPECT_THROW(parse_run_config("model.variant = multipath\nmodel.conv_kernels = 128\n"), DataError);
  try {
    parse_run_config("seed = 1\n\nbogus = 2\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, EveryDefaultEntryParses) {
  std::string text;
  for (const auto& [k, v] : default_config_entries()) text += k + " = " + v + "\n";
  EXPECT_EQ(format_run_config(parse_run_config(text)), format_run_config(RunConfig{}));
}

TEST(RunConfig, DoublesSurviveExactly) {
  RunConfig c;
  c.train.lr0 = 0.1 + 0.2;
  c.merge.max_peak_diff_hz = 1.0 / 3.0;
  const RunConfig back = parse_run_config(format_run_config(c));
  EXPECT_EQ(back.train.lr0, c.train.lr0);
  EXPECT_EQ(back.merge.max_peak_diff_hz, c.merge.max_peak_diff_hz);
}

TEST(ModelSpecText, RoundTrip) {
  ModelSpec s = ModelSpec::calibrated(Variant::kRB2);
  s.seed = 99;
  s.dropout_rate = 0.25;
  EXPECT_EQ(parse_model_spec(format_model_spec(s)), s);
}

TEST(Checkpoint, ByteIdenticalRoundTrip) {
  for (Variant v : kAllVariants) {
    Model m(toy_spec(v));
    const std::string bytes = serialize_checkpoint(m);
    Model back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.spec(), m.spec());
    EXPECT_EQ(serialize_checkpoint(back), bytes) << to_string(v);
  }
}

TEST(Checkpoint, PreservesTrainedValuesAndFiles) {
  Model m(toy_spec(Variant::kMultiPath));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Parameter* p : m.parameters()) {
    for (double& v : p->value.values()) v = u(rng);
  }
  const auto path = std::filesystem::temp_directory_path() / "casdet_ckpt_test.bin";
  save_checkpoint(path, m);
  Model back = load_checkpoint(path);
  std::filesystem::remove(path);
  const auto a = m.parameters(), b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_TRUE(std::equal(a[i]->value.values().begin(), a[i]->value.values().end(),
                           b[i]->value.values().begin()));
  }
}

TEST(Checkpoint, RejectsCorruption) {
  Model m(toy_spec(Variant::kBaseline));
  const std::string bytes = serialize_checkpoint(m);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), DataError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), DataError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/casdet.ckpt"), DataError);
}

}  // namespace
}  // namespace casdet
