// gridsep/train/trainer.hpp

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

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "gridsep/data/synth.hpp"
#include "gridsep/model/tfgridnet.hpp"
#include "gridsep/objectives/losses.hpp"
#include "gridsep/train/checkpoint.hpp"
#include "gridsep/train/optim.hpp"
#include "gridsep/train/run_config.hpp"

namespace gridsep::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker cap from GRIDSEP_THREADS, else the machine's parallelism.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("GRIDSEP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(fmt::format("GRIDSEP_THREADS must be a positive integer, got '{}'", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; results must be
/// written to per-index slots so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct UtteranceMetrics {
  std::string id;
  double loss = 0;
  double mc_term = 0;
  double sisdr_mix = 0;
  double sisdr_est = 0;
  double sisdri = 0;
};

struct EvalStats {
  double loss = 0;
  double mc_term = 0;
  double sisdri_db = 0;
  double sisdr_mix_db = 0;
  std::vector<UtteranceMetrics> utterances;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0;
  double mc_term = 0;
  double val_loss = 0;
  double val_sisdri_db = 0;
  double lr = 0;
  double seconds = 0;
};

inline std::string format_epoch_line(const EpochStats& e) {
  return fmt::format("{}\t{:.6f}\t{:.6f}\t{:.2f}\t{:.8g}\t{:.6f}", e.epoch, e.train_loss,
                     e.val_loss, e.val_sisdri_db, e.lr, e.mc_term);
}

template <class S>
ad::Tensor<S> to_tensor(const std::vector<double>& x) {
  return ad::Tensor<S>(ad::Shape{x.size()}, std::vector<S>(x.begin(), x.end()));
}

/// (1/N) |sum_c a_c s_hat_c - x|_1 on plain values.
template <class S>
double mixture_term(const std::vector<ad::Tensor<S>>& ests, const std::vector<double>& alphas,
                    const ad::Tensor<S>& mixture) {
  const std::size_t n = mixture.numel();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < ests.size(); ++c) s += alphas[c] * static_cast<double>(ests[c][i]);
    acc += std::abs(s - static_cast<double>(mixture[i]));
  }
  return acc / static_cast<double>(n);
}

/// Loss and SI-SDRi of one full utterance, without gradients.
template <class S>
UtteranceMetrics evaluate_utterance(const model::TfGridNet<S>& net, const data::Utterance& utt,
                                    objectives::Objective objective) {
  ad::NoGradScope no_grad;
  data::Utterance u = utt;
  data::normalize_variance(u);
  const auto mix = to_tensor<S>(u.mixture.samples);
  std::vector<ad::Tensor<S>> refs;
  for (const auto& s : u.sources) refs.push_back(to_tensor<S>(s.samples));
  const auto ests = net.separate(mix);
  const auto pit = objectives::pit(ests, refs, &mix, objective);
  UtteranceMetrics m;
  m.id = u.id;
  m.loss = static_cast<double>(pit.loss.item());
  m.mc_term = mixture_term(ests, pit.alphas, mix);
  std::vector<std::vector<double>> e, r;
  for (const auto& t : ests) e.emplace_back(t.data().begin(), t.data().end());
  for (const auto& s : u.sources) r.push_back(s.samples);
  const auto imp = objectives::si_sdri(e, r, u.mixture.samples);
  m.sisdr_mix = imp.mixture_db;
  m.sisdr_est = imp.estimate_db;
  m.sisdri = imp.improvement_db;
  return m;
}

template <class S>
EvalStats evaluate(const model::TfGridNet<S>& net, const std::vector<data::Utterance>& utts,
                   objectives::Objective objective, std::size_t workers = 1) {
  EvalStats st;
  st.utterances.resize(utts.size());
  parallel_for(utts.size(), workers,
               [&](std::size_t i) { st.utterances[i] = evaluate_utterance(net, utts[i], objective); });
  for (const auto& m : st.utterances) {
    st.loss += m.loss;
    st.mc_term += m.mc_term;
    st.sisdri_db += m.sisdri;
    st.sisdr_mix_db += m.sisdr_mix;
  }
  if (!utts.empty()) {
    const double n = static_cast<double>(utts.size());
    st.loss /= n;
    st.mc_term /= n;
    st.sisdri_db /= n;
    st.sisdr_mix_db /= n;
  }
  return st;
}

/// Owns a network, its optimizer and schedule, and the sampling RNG.
template <class S>
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg)
      : cfg_(cfg), net_(cfg.model, cfg.stft, cfg.train.seed), rng_(data::mix_seed(cfg.train.seed, 0x7a)) {
    cfg_.validate();
    adam_.lr = cfg.train.lr;
    adam_.beta1 = cfg.train.adam_beta1;
    adam_.beta2 = cfg.train.adam_beta2;
    adam_.eps = cfg.train.adam_eps;
    schedule_.lr = cfg.train.lr;
  }

  /// Restores network, optimizer, schedule, epoch counter and RNG.
  explicit Trainer(const Checkpoint& ck)
      : cfg_(ck.config),
        net_(ck.config.model, ck.config.stft, import_parameters<S>(ck.params)),
        rng_(0) {
    adam_.beta1 = cfg_.train.adam_beta1;
    adam_.beta2 = cfg_.train.adam_beta2;
    adam_.eps = cfg_.train.adam_eps;
    for (const auto& a : ck.moments) {
      std::vector<S> v(a.values.begin(), a.values.end());
      if (a.name.rfind("adam.m/", 0) == 0) adam_.m[a.name.substr(7)] = std::move(v);
      else if (a.name.rfind("adam.v/", 0) == 0) adam_.v[a.name.substr(7)] = std::move(v);
      else throw CheckpointError("unexpected optimizer array " + a.name);
    }
    const auto get = [&](const std::string& k) {
      const auto it = ck.state.find(k);
      if (it == ck.state.end()) throw CheckpointError("checkpoint state lacks '" + k + "'");
      return it->second;
    };
    try {
      epoch_ = std::stoull(get("epoch"));
      adam_.step = std::stoull(get("step"));
      schedule_.lr = std::stod(get("lr"));
      schedule_.best_val_loss = std::stod(get("best_val_loss"));
      schedule_.epochs_since_improvement = std::stoull(get("epochs_since_improvement"));
    } catch (const CheckpointError&) {
      throw;
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint state: ") + e.what());
    }
    adam_.lr = schedule_.lr;
    std::istringstream rs(get("rng"));
    rs >> rng_;
    if (!rs) throw CheckpointError("malformed RNG state in checkpoint");
  }

  const RunConfig& config() const { return cfg_; }
  model::TfGridNet<S>& net() { return net_; }
  const model::TfGridNet<S>& net() const { return net_; }
  std::size_t epoch() const { return epoch_; }
  const ScheduleState& schedule() const { return schedule_; }
  const AdamState<S>& adam() const { return adam_; }

  bool finished() const {
    return epoch_ >= cfg_.train.max_epochs || schedule_.lr < cfg_.train.min_lr;
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.config = cfg_;
    ck.params = export_parameters(net_.parameters());
    for (const auto& [name, _] : net_.parameters()) {
      for (const char* kind : {"m", "v"}) {
        const auto& src = kind[0] == 'm' ? adam_.m : adam_.v;
        const auto it = src.find(name);
        const auto& shape = net_.parameters().at(name).shape();
        NamedArray a{fmt::format("adam.{}/{}", kind, name), shape, {}};
        if (it != src.end()) a.values.assign(it->second.begin(), it->second.end());
        else a.values.assign(ad::numel(shape), 0.0);
        ck.moments.push_back(std::move(a));
      }
    }
    std::ostringstream rs;
    rs << rng_;
    ck.state["epoch"] = std::to_string(epoch_);
    ck.state["step"] = std::to_string(adam_.step);
    ck.state["lr"] = fmt::format("{}", schedule_.lr);
    ck.state["best_val_loss"] = fmt::format("{}", schedule_.best_val_loss);
    ck.state["epochs_since_improvement"] = std::to_string(schedule_.epochs_since_improvement);
    ck.state["rng"] = rs.str();
    return ck;
  }

  /// One pass over `train` in shuffled order: random segment, variance
  /// normalization, forward, PIT loss, backward, clip, Adam.
  EpochStats train_epoch(const std::vector<data::Utterance>& train,
                         const std::function<void(std::size_t, double)>& progress = {}) {
    if (train.empty()) throw TrainError("training split is empty");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    auto& params = net_.parameters();
    params.zero_grad();
    const std::size_t accum = cfg_.train.grad_accum;
    double loss_sum = 0, mc_sum = 0;
    std::size_t pending = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& utt = train[order[k]];
      auto seg = data::sample_segment(utt, cfg_.train.segment_seconds, rng_);
      data::normalize_variance(seg);
      const auto mix = to_tensor<S>(seg.mixture.samples);
      std::vector<ad::Tensor<S>> refs;
      for (const auto& s : seg.sources) refs.push_back(to_tensor<S>(s.samples));
      ad::Tape tape;
      objectives::PitResult<S> pit;
      std::vector<ad::Tensor<S>> ests;
      {
        ad::TapeScope scope(tape);
        ests = net_.separate(mix);
        pit = objectives::pit(ests, refs, &mix, cfg_.train.objective);
      }
      const double loss = static_cast<double>(pit.loss.item());
      if (!std::isfinite(loss))
        throw TrainError(fmt::format("non-finite loss on utterance {} (epoch {})", utt.id, epoch_ + 1));
      tape.backward(pit.loss);
      loss_sum += loss;
      mc_sum += mixture_term(ests, pit.alphas, mix);
      if (++pending == accum || k + 1 == order.size()) {
        if (pending > 1) {
          for (const auto& [_, t] : params) {
            auto p = t;
            if (!p.has_grad()) continue;
            for (S& g : p.mutable_grad()) g /= static_cast<S>(pending);
          }
        }
        clip_global_norm(params, cfg_.train.clip_norm);
        adam_step(params, adam_);
        params.zero_grad();
        pending = 0;
      }
      if (progress) progress(k + 1, loss);
    }
    EpochStats st;
    st.epoch = epoch_ + 1;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    st.mc_term = mc_sum / static_cast<double>(train.size());
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
  }

  /// Validation plus schedule update; closes the epoch.
  EpochStats finish_epoch(EpochStats st, const EvalStats& val) {
    st.val_loss = val.loss;
    st.val_sisdri_db = val.sisdri_db;
    schedule_update(schedule_, val.loss, cfg_.train.patience);
    adam_.lr = schedule_.lr;
    st.lr = schedule_.lr;
    ++epoch_;
    return st;
  }

 private:
  RunConfig cfg_;
  model::TfGridNet<S> net_;
  AdamState<S> adam_;
  ScheduleState schedule_;
  std::size_t epoch_ = 0;
  std::mt19937_64 rng_;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::filesystem::path resume;  // empty: fresh run
  std::size_t workers = 1;
  std::function<void(const std::string&)> log;  // progress messages
};

struct TrainSummary {
  std::vector<EpochStats> epochs;
  double best_val_sisdri_db = 0;
  std::string stop_reason;
};

/// Epoch loop with validation, checkpoints (`latest.ckpt`, `best.ckpt`) and
/// the epoch log `train_log.tsv`.
template <class S>
TrainSummary run_training(const RunConfig& cfg, const std::vector<data::Utterance>& train,
                          const std::vector<data::Utterance>& valid, const TrainOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);
  Trainer<S> trainer = opt.resume.empty() ? Trainer<S>(cfg) : Trainer<S>(load_checkpoint(opt.resume));
  const auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  std::ofstream epoch_log(opt.out_dir / "train_log.tsv", opt.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!epoch_log) throw TrainError("cannot write " + (opt.out_dir / "train_log.tsv").string());
  const auto start = std::chrono::steady_clock::now();
  const double budget_s = trainer.config().train.max_wall_minutes * 60.0;
  double last_epoch_s = 0;
  double best_val = trainer.schedule().best_val_loss;
  TrainSummary summary;
  while (true) {
    if (trainer.epoch() >= trainer.config().train.max_epochs) {
      summary.stop_reason = "max_epochs";
      break;
    }
    if (trainer.schedule().lr < trainer.config().train.min_lr) {
      summary.stop_reason = "min_lr";
      break;
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_s > 0 && elapsed + last_epoch_s > budget_s) {
      summary.stop_reason = "wall_time";
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto st = trainer.train_epoch(train);
    const auto val = evaluate(trainer.net(), valid, trainer.config().train.objective, opt.workers);
    st = trainer.finish_epoch(st, val);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    last_epoch_s = st.seconds;
    summary.epochs.push_back(st);
    epoch_log << format_epoch_line(st) << '\n' << std::flush;
    log(fmt::format("epoch {:3d}  train {:.4f}  val {:.4f}  val SI-SDRi {:.2f} dB  lr {:.3g}  mc {:.4f}  ({:.0f} s)",
                    st.epoch, st.train_loss, st.val_loss, st.val_sisdri_db, st.lr, st.mc_term, st.seconds));
    const auto ck = trainer.checkpoint();
    save_checkpoint(opt.out_dir / "latest.ckpt", ck);
    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      summary.best_val_sisdri_db = st.val_sisdri_db;
      save_checkpoint(opt.out_dir / "best.ckpt", ck);
    }
  }
  if (!fs::exists(opt.out_dir / "best.ckpt"))
    save_checkpoint(opt.out_dir / "best.ckpt", trainer.checkpoint());
  return summary;
}

}  // namespace gridsep::train
