#include <gtest/gtest.h>

#include <filesystem>

#include "satvq/bench.hpp"
#include "satvq/checkpoint.hpp"
#include "satvq/config.hpp"
#include "satvq/gradcheck.hpp"
#include "satvq/pgm.hpp"
#include "satvq/train.hpp"

using namespace satvq;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("satvq_tooling_" + name);
  std::filesystem::remove_all(p);
  return p;
}

struct MicroRun {
  config::RunConfig cfg = config::preset("micro");
  data::Dataset ds = data::generate(config::generator(cfg), 16, cfg.data_seed, cfg.side, cfg.contexts);
  std::vector<pipeline::Problem<float>> problems = train::load_all<float>(ds, 0, ds.size());
};

}  // namespace

TEST(Config, PresetsValidate) {
  for (const auto& name : config::preset_names()) EXPECT_NO_THROW(config::validate(config::preset(name))) << name;
  EXPECT_THROW(config::preset("huge"), config::ConfigError);
}

TEST(Config, RoundTripIsIdentical) {
  auto c = config::preset("micro");
  c.learning_rate = 1.25e-3;
  c.seed = 99;
  c.variant = "vq+attention";
  const auto text = config::serialize(c);
  const auto back = config::parse(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(config::serialize(back), text);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config::parse(R"({"preset":"micro","learning_rat":0.1})"), config::ConfigError);
  EXPECT_THROW(config::parse(R"({"preset":"micro","epochs":"ten"})"), config::ConfigError);
  EXPECT_THROW(config::parse(R"({"preset":"micro","batch_size":0})"), config::ConfigError);
  EXPECT_THROW(config::parse(R"({"preset":"micro","variant":"plain+satnet"})"), config::ConfigError);
  EXPECT_THROW(config::parse(R"({"preset":"micro","rules":"constant+spiral"})"), config::ConfigError);
  EXPECT_THROW(config::parse(R"({"preset":"micro","side":24})"), config::ConfigError);
  EXPECT_THROW(config::parse("[1,2]"), config::ConfigError);
  EXPECT_THROW(config::parse("{"), config::ConfigError);
}

TEST(Config, RuleSelection) {
  auto c = config::preset("desk");
  const auto g = config::generator(c);
  EXPECT_TRUE(g.allowed[0] && g.allowed[1]);
  EXPECT_FALSE(g.allowed[2] || g.allowed[3]);
  c.rules = "all";
  const auto all = config::generator(c);
  EXPECT_TRUE(all.allowed[0] && all.allowed[1] && all.allowed[2] && all.allowed[3]);
}

TEST(Checkpoint, RoundTripRestoresModelAndOptimizer) {
  MicroRun run;
  Rng rng(run.cfg.seed);
  auto model = pipeline::build_variant<float>(config::model_config(run.cfg), rng);
  pipeline::Optimizer<float> opt(AdamOptions{.lr = run.cfg.learning_rate});
  train::run_epoch(model, opt, run.problems, run.cfg.batch_size, run.cfg.seed, 0);
  const auto bytes = checkpoint::encode(run.cfg, model, opt, {1, opt.adam.steps()});
  const auto back = checkpoint::decode(bytes);
  EXPECT_EQ(back.cfg, run.cfg);
  EXPECT_EQ(back.state.epochs_done, 1);
  EXPECT_EQ(back.state.adam_steps, opt.adam.steps());
  std::vector<Mat<float>> a, b;
  model.visit([&](const std::string&, const Mat<float>& m) { a.push_back(m); });
  back.model.visit([&](const std::string&, const Mat<float>& m) { b.push_back(m); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  ASSERT_EQ(back.optimizer.slots.size(), opt.slots.size());
  for (std::size_t i = 0; i < opt.slots.size(); ++i) {
    EXPECT_EQ(back.optimizer.slots[i].m, opt.slots[i].m);
    EXPECT_EQ(back.optimizer.slots[i].v, opt.slots[i].v);
  }
  EXPECT_EQ(checkpoint::encode(back.cfg, back.model, back.optimizer, back.state), bytes);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  MicroRun run;
  Rng rng(1);
  auto model = pipeline::build_variant<float>(config::model_config(run.cfg), rng);
  pipeline::Optimizer<float> opt;
  const auto bytes = checkpoint::encode(run.cfg, model, opt, {});
  EXPECT_THROW(checkpoint::decode(bytes.substr(0, bytes.size() - 4)), FormatError);
  EXPECT_THROW(checkpoint::decode(bytes.substr(0, 10)), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(checkpoint::decode(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 7;
  EXPECT_THROW(checkpoint::decode(bad_version), FormatError);
  auto bad_header = bytes;
  bad_header[20] = '#';
  EXPECT_THROW(checkpoint::decode(bad_header), FormatError);
  EXPECT_THROW(checkpoint::load(scratch("missing.ckpt")), io::IoError);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  MicroRun run;
  auto fresh = [&] {
    Rng rng(run.cfg.seed);
    return pipeline::build_variant<float>(config::model_config(run.cfg), rng);
  };
  auto straight = fresh();
  pipeline::Optimizer<float> opt(AdamOptions{.lr = run.cfg.learning_rate});
  train::run_epoch(straight, opt, run.problems, run.cfg.batch_size, run.cfg.seed, 0);
  const auto bytes = checkpoint::encode(run.cfg, straight, opt, {1, opt.adam.steps()});
  const auto expected = train::run_epoch(straight, opt, run.problems, run.cfg.batch_size, run.cfg.seed, 1);

  auto resumed = checkpoint::decode(bytes);
  const auto got = train::run_epoch(resumed.model, resumed.optimizer, run.problems, run.cfg.batch_size, run.cfg.seed, 1);
  EXPECT_EQ(got.loss.abst, expected.loss.abst);
  EXPECT_EQ(got.loss.recon, expected.loss.recon);
  EXPECT_EQ(got.loss.reason, expected.loss.reason);
  EXPECT_EQ(got.loss.total, expected.loss.total);
}

TEST(Train, EpochCoversEveryProblemOnce) {
  const auto order = train::epoch_order(50, 3, 2);
  std::vector<int> seen(50, 0);
  for (auto i : order) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_NE(train::epoch_order(50, 3, 2), train::epoch_order(50, 3, 3));
  MicroRun run;
  Rng rng(2);
  auto model = pipeline::build_variant<float>(config::model_config(run.cfg), rng);
  pipeline::Optimizer<float> opt;
  std::size_t total = 0;
  const auto rec = train::run_epoch(model, opt, run.problems, 5, 1, 0, [&](const train::BatchRecord& b) {
    total += b.size;
    EXPECT_NEAR(b.loss.total, b.loss.abst + b.loss.recon + b.loss.reason, 1e-9);
  });
  EXPECT_EQ(total, run.problems.size());
  EXPECT_EQ(rec.batches, 4);
}

TEST(Gradcheck, SuitesPassAndCatchCorruption) {
  const auto layer = gradcheck::satnet_layer(4);
  EXPECT_TRUE(layer.passed()) << layer.worst;
  const auto nets = gradcheck::encode_decode(1);
  EXPECT_TRUE(nets.passed()) << nets.worst;
  satnet::backward_corruption() = 1.5;
  const auto broken = gradcheck::satnet_layer(4);
  satnet::backward_corruption() = 1.0;
  EXPECT_FALSE(broken.passed());
}

TEST(Bench, FourClauseInstanceComesFirstWithOptimumThree) {
  bench::BenchOptions o;
  o.instances = 5;
  const auto s = bench::run(o);
  ASSERT_EQ(s.rows.size(), 5u);
  EXPECT_EQ(s.rows[0].n, 2);
  EXPECT_EQ(s.rows[0].m, 4);
  EXPECT_EQ(s.rows[0].opt, 3);
  EXPECT_EQ(s.rows[0].achieved, 3);
}

TEST(Bench, DeterministicPerSeed) {
  bench::BenchOptions o;
  o.instances = 20;
  const auto a = bench::run(o), b = bench::run(o);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].opt, b.rows[i].opt);
    EXPECT_EQ(a.rows[i].achieved, b.rows[i].achieved);
    EXPECT_EQ(a.rows[i].sweeps, b.rows[i].sweeps);
  }
  for (const auto& r : a.rows) {
    EXPECT_LE(r.n, o.max_vars);
    EXPECT_LE(r.m, o.max_clauses);
    EXPECT_GE(r.gap(), 0);
  }
}

TEST(Pgm, HeaderAndPixelLayout) {
  pgm::Canvas img(3, 2, 0.0f);
  const std::vector<float> panel{1.0f, 0.5f, 0.0f, 1.0f};
  img.paste(panel, 2, 1, 0);
  const auto bytes = pgm::encode(img);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  const auto px = [&](int i) { return static_cast<unsigned char>(bytes[header.size() + i]); };
  EXPECT_EQ(px(0), 0);
  EXPECT_EQ(px(1), 255);
  EXPECT_EQ(px(2), 128);
  EXPECT_EQ(px(4), 0);
  EXPECT_EQ(px(5), 255);
}

TEST(Gradcheck, ReluPatternProbeRecordsEveryHiddenUnit) {
  Rng rng(4);
  const auto model = pipeline::build_variant<double>(gradcheck::micro_model(), rng);
  nets::Panel<double> x{Mat<double>::Constant(1, 36, 0.5), 6};
  std::vector<bool> pattern;
  nets::relu_pattern_sink() = &pattern;
  const auto enc = nets::encode(model.nets, x);
  nets::relu_pattern_sink() = nullptr;
  ASSERT_EQ(pattern.size(), static_cast<std::size_t>(enc.tape.acts[1].data.size()));
  for (Eigen::Index i = 0; i < enc.tape.acts[1].data.size(); ++i)
    EXPECT_EQ(pattern[i], enc.tape.acts[1].data.reshaped()[i] > 0);
}

TEST(Train, MicroEpochOnTwoThousandProblemsIsQuick) {
  auto cfg = config::preset("micro");
  const auto ds = data::generate(config::generator(cfg), 2000, cfg.data_seed, cfg.side, cfg.contexts);
  const auto problems = train::load_all<float>(ds, 0, ds.size());
  Rng rng(cfg.seed);
  auto model = pipeline::build_variant<float>(config::model_config(cfg), rng);
  pipeline::Optimizer<float> opt(AdamOptions{.lr = cfg.learning_rate});
  const auto rec = train::run_epoch(model, opt, problems, cfg.batch_size, cfg.seed, 0);
  EXPECT_EQ(rec.rejected, 0);
  EXPECT_LT(rec.seconds, 60.0);
}
