// tests/test_train.cpp

// Copyright 2026 The gridsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "gridsep/train/trainer.hpp"
#include "test_util.hpp"

namespace gridsep::train {
namespace {

namespace fs = std::filesystem;
using gridsep::testing::Shape;

template <class S>
void set_grad(ad::ParameterSet<S>& ps, const std::string& name, std::vector<S> g) {
  auto t = ps.at(name);
  auto dst = t.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

RunConfig micro_config(Precision p = Precision::kFloat64) {
  RunConfig c;
  c = parse_run_config(
      "emb_dim = 2\nnum_blocks = 1\nlstm_hidden = 3\nattn_heads = 1\nattn_qk_dim = 1\n"
      "unfold_kernel = 1\nunfold_stride = 1\nsegment_seconds = 0.25\nmax_epochs = 2\n"
      "objective = mc\n");
  c.train.precision = p;
  return c;
}

std::vector<data::Utterance> micro_corpus(std::size_t n, std::uint64_t base) {
  std::vector<data::Utterance> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(data::make_utterance("u" + std::to_string(i), base + i, -2.0 + i, 0.5));
  return out;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gridsep_test_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(ClipGlobalNorm, LeavesSmallGradients) {
  ad::ParameterSet<double> ps;
  ps.add("a", Shape{2}, {0, 0});
  set_grad<double>(ps, "a", {0.3, 0.4});
  EXPECT_DOUBLE_EQ(clip_global_norm(ps, 1.0), 0.5);
  EXPECT_EQ(ps.at("a").grad()[0], 0.3);
  EXPECT_EQ(ps.at("a").grad()[1], 0.4);
}

TEST(ClipGlobalNorm, ScalesLargeGradients) {
  ad::ParameterSet<double> ps;
  ps.add("a", Shape{1}, {0});
  set_grad<double>(ps, "a", {4.0});
  EXPECT_DOUBLE_EQ(clip_global_norm(ps, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(ps.at("a").grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(global_grad_norm(ps), 1.0);
}

TEST(ClipGlobalNorm, NormSpansParameters) {
  ad::ParameterSet<double> ps;
  ps.add("a", Shape{1}, {0});
  ps.add("b", Shape{1}, {0});
  ps.add("c", Shape{1}, {0});  // no gradient
  set_grad<double>(ps, "a", {3.0});
  set_grad<double>(ps, "b", {4.0});
  EXPECT_DOUBLE_EQ(clip_global_norm(ps, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(ps.at("a").grad()[0], 0.6);
  EXPECT_DOUBLE_EQ(ps.at("b").grad()[0], 0.8);
  EXPECT_FALSE(ps.at("c").has_grad());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ad::ParameterSet<double> ps;
  ps.add("w", Shape{3}, {1, -2, 3});
  AdamState<double> st;
  for (int i = 0; i < 5; ++i) adam_step(ps, st);
  EXPECT_EQ(std::vector<double>(ps.at("w").data().begin(), ps.at("w").data().end()),
            (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::ParameterSet<double> ps;
  ps.add("w", Shape{3}, {1, 1, 1});
  set_grad<double>(ps, "w", {0.5, -2.0, 1e-3});
  AdamState<double> st;
  adam_step(ps, st);
  const auto w = ps.at("w").data();
  EXPECT_NEAR(w[0] - 1, -1e-3, 1e-10);
  EXPECT_NEAR(w[1] - 1, 1e-3, 1e-10);
  EXPECT_NEAR(w[2] - 1, -1e-3, 1e-7);
}

TEST(Adam, StepsAreBoundedByLearningRate) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 10.0);
  ad::ParameterSet<double> ps;
  ps.add("w", Shape{16}, std::vector<double>(16, 0.0));
  AdamState<double> st;
  for (int step = 0; step < 50; ++step) {
    const std::vector<double> before(ps.at("w").data().begin(), ps.at("w").data().end());
    std::vector<double> grad(16);
    for (double& v : grad) v = g(rng);
    ps.zero_grad();
    set_grad(ps, "w", grad);
    adam_step(ps, st);
    // |m_hat| / sqrt(v_hat) <= (1 - b1) / sqrt(1 - b2) for any gradient history.
    const double bound = st.lr * (1 - st.beta1) / std::sqrt(1 - st.beta2) * 1.0001;
    for (std::size_t i = 0; i < 16; ++i) ASSERT_LE(std::abs(ps.at("w").data()[i] - before[i]), bound);
  }
}

std::vector<double> lr_trace(const std::vector<double>& losses) {
  ScheduleState st;
  std::vector<double> out;
  for (double l : losses) {
    schedule_update(st, l);
    out.push_back(st.lr);
  }
  return out;
}

TEST(Schedule, ImprovingLossKeepsRate) {
  EXPECT_EQ(lr_trace({10, 9, 8}), (std::vector<double>{1e-3, 1e-3, 1e-3}));
}

TEST(Schedule, ThreeStalledEpochsHalve) {
  EXPECT_EQ(lr_trace({10, 10, 10, 10}), (std::vector<double>{1e-3, 1e-3, 1e-3, 5e-4}));
}

TEST(Schedule, TraceWithImprovementInBetween) {
  EXPECT_EQ(lr_trace({10, 10, 10, 10, 9, 9, 9, 9}),
            (std::vector<double>{1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 5e-4, 2.5e-4}));
}

TEST(Schedule, ImprovementResetsStallCount) {
  EXPECT_EQ(lr_trace({10, 10, 10, 9, 9, 9}), std::vector<double>(6, 1e-3));
  EXPECT_EQ(lr_trace({10, 10 - 1e-7, 10, 10}), (std::vector<double>{1e-3, 1e-3, 1e-3, 5e-4}));
}

TEST(Schedule, HalvingsAfterStall) {
  for (std::size_t k = 0; k <= 10; ++k) {
    std::vector<double> losses{1.0};
    losses.insert(losses.end(), k, 2.0);
    EXPECT_DOUBLE_EQ(lr_trace(losses).back(), 1e-3 * std::pow(0.5, static_cast<double>(k / 3))) << k;
  }
}

TEST(RunConfig, DefaultsAndTextRoundTrip) {
  const RunConfig d;
  EXPECT_EQ(d.train.lr, 1e-3);
  EXPECT_EQ(d.train.patience, 3u);
  EXPECT_EQ(d.train.clip_norm, 1.0);
  EXPECT_EQ(d.train.segment_seconds, 4.0);
  EXPECT_EQ(d.train.objective, objectives::Objective::kMixtureConstraint);
  EXPECT_EQ(d.train.precision, Precision::kFloat32);
  const auto c = micro_config();
  EXPECT_EQ(parse_run_config(c.to_text()).to_text(), c.to_text());
}

TEST(RunConfig, ErrorsNameTheKeyAndLine) {
  try {
    parse_run_config("lr = 0.01\nlearning_rate = 3\n", {}, "x.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(parse_run_config("lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_run_config("num_blocks = -1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("precision = float16\n"), ConfigError);
  EXPECT_THROW(parse_run_config("lr 0.1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("n_dft = 64\n"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent.cfg"), ConfigError);
}

TEST(EpochLine, Format) {
  EpochStats e;
  e.epoch = 3;
  e.train_loss = -10.5;
  e.val_loss = -11.25;
  e.val_sisdri_db = 7.125;
  e.lr = 5e-4;
  e.mc_term = 0.0625;
  EXPECT_EQ(format_epoch_line(e), "3\t-10.500000\t-11.250000\t7.12\t0.0005\t0.062500");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (auto p : {Precision::kFloat32, Precision::kFloat64}) {
    const auto cfg = micro_config(p);
    Trainer<float> tf(cfg);
    const auto ck = tf.checkpoint();
    const auto back = decode_checkpoint(encode_checkpoint(ck), "mem");
    EXPECT_EQ(back.config.to_text(), ck.config.to_text());
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      EXPECT_EQ(back.params[i].name, ck.params[i].name);
      EXPECT_EQ(back.params[i].shape, ck.params[i].shape);
      EXPECT_EQ(back.params[i].values, ck.params[i].values);
      if (i > 0) EXPECT_LT(ck.params[i - 1].name, ck.params[i].name);
    }
    EXPECT_EQ(back.moments.size(), 2 * ck.params.size());
    EXPECT_EQ(back.state, ck.state);
    model::TfGridNet<float> net(back.config.model, back.config.stft, import_parameters<float>(back.params));
    const auto u = data::make_utterance("x", 11, 0.0, 0.5);
    const auto a = model::forward_separate(u.mixture, tf.net());
    const auto b = model::forward_separate(u.mixture, net);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_EQ(a[c].samples, b[c].samples);
  }
}

TEST(Checkpoint, Float64ElementsSurvive) {
  Trainer<double> t(micro_config(Precision::kFloat64));
  const auto ck = t.checkpoint();
  const auto back = decode_checkpoint(encode_checkpoint(ck), "mem");
  for (std::size_t i = 0; i < ck.params.size(); ++i) EXPECT_EQ(back.params[i].values, ck.params[i].values);
}

TEST(Checkpoint, Rejections) {
  Trainer<float> t(micro_config(Precision::kFloat32));
  const auto bytes = encode_checkpoint(t.checkpoint());
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_checkpoint(std::vector<char>(bytes.begin(), bytes.begin() + cut), "cut"),
                 CheckpointError)
        << cut;
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, "magic"), CheckpointError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version, "version"), CheckpointError);
  auto trailing = bytes;
  trailing.push_back('\0');
  EXPECT_THROW(decode_checkpoint(trailing, "trailing"), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent.ckpt"), CheckpointError);

  auto ck = t.checkpoint();
  std::swap(ck.params[0], ck.params[1]);
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(ck), "order"), CheckpointError);
}

TEST(Trainer, Float64EpochIsDeterministic) {
  const auto cfg = micro_config();
  const auto tr = micro_corpus(3, 100), va = micro_corpus(2, 200);
  Trainer<double> a(cfg), b(cfg);
  const auto ea = a.train_epoch(tr), eb = b.train_epoch(tr);
  EXPECT_EQ(ea.train_loss, eb.train_loss);
  EXPECT_TRUE(std::isfinite(ea.train_loss));
  const auto va1 = evaluate(a.net(), va, cfg.train.objective, 1);
  const auto va2 = evaluate(b.net(), va, cfg.train.objective, 2);
  EXPECT_EQ(va1.loss, va2.loss);
  EXPECT_EQ(va1.sisdri_db, va2.sisdri_db);
  const auto ca = a.checkpoint(), cb = b.checkpoint();
  for (std::size_t i = 0; i < ca.params.size(); ++i) EXPECT_EQ(ca.params[i].values, cb.params[i].values);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto cfg = micro_config();
  const auto tr = micro_corpus(3, 300), va = micro_corpus(2, 400);
  const auto full_dir = scratch("full"), part_dir = scratch("part");
  TrainOptions full{full_dir, {}, 1, {}};
  const auto s_full = run_training<double>(cfg, tr, va, full);
  ASSERT_EQ(s_full.epochs.size(), 2u);
  EXPECT_EQ(s_full.stop_reason, "max_epochs");

  auto one = cfg;
  one.train.max_epochs = 1;
  TrainOptions part{part_dir, {}, 1, {}};
  run_training<double>(one, tr, va, part);
  auto ck = load_checkpoint(part_dir / "latest.ckpt");
  ck.config.train.max_epochs = 2;
  save_checkpoint(part_dir / "resume.ckpt", ck);
  TrainOptions resume{part_dir, part_dir / "resume.ckpt", 1, {}};
  const auto s_res = run_training<double>(cfg, tr, va, resume);
  ASSERT_EQ(s_res.epochs.size(), 1u);
  EXPECT_EQ(s_res.epochs[0].epoch, 2u);
  EXPECT_EQ(s_res.epochs[0].train_loss, s_full.epochs[1].train_loss);
  EXPECT_EQ(s_res.epochs[0].val_loss, s_full.epochs[1].val_loss);

  const auto a = load_checkpoint(full_dir / "latest.ckpt"), b = load_checkpoint(part_dir / "latest.ckpt");
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].values, b.params[i].values);
  EXPECT_EQ(a.state, b.state);

  std::ifstream log(part_dir / "train_log.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 2u);
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}

TEST(Trainer, StopsAtMinimumRate) {
  auto cfg = micro_config();
  cfg.train.lr = 1e-6;
  cfg.train.min_lr = 1e-5;
  const auto dir = scratch("minlr");
  const auto s = run_training<double>(cfg, micro_corpus(1, 500), micro_corpus(1, 600), {dir, {}, 1, {}});
  EXPECT_EQ(s.stop_reason, "min_lr");
  EXPECT_TRUE(s.epochs.empty());
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  fs::remove_all(dir);
}

TEST(ParallelFor, PropagatesErrors) {
  std::vector<int> out(10, 0);
  parallel_for(10, 3, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) {
                 if (i == 3) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

}  // namespace
}  // namespace gridsep::train
