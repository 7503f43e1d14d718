// tools/gridsep.cpp

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

// gridsep: corpus generation, training, evaluation, separation and
// self-verification.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid usage or input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gridsep/cli/verify.hpp"
#include "gridsep/data/corpus.hpp"
#include "gridsep/train/trainer.hpp"
#include "gridsep/util/runtime.hpp"

namespace fs = std::filesystem;
using namespace gridsep;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print(const std::string& s) { std::cout << s << std::endl; }

int cmd_synth_data(const fs::path& out, const data::CorpusSpec& spec, bool force, bool audio) {
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw UsageError(out.string() + " exists and is not empty (use --force to overwrite)");
  data::write_corpus(out, spec, audio);
  print(fmt::format("wrote {} / {} / {} utterances (train / valid / test) to {}", spec.train, spec.valid,
                    spec.test, out.string()));
  return 0;
}

template <class S>
int train_with(const train::RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
               const fs::path& resume) {
  const auto tr = data::load_split(data_dir, data::Split::kTrain, cfg.stft.sample_rate);
  const auto va = data::load_split(data_dir, data::Split::kValid, cfg.stft.sample_rate);
  print(fmt::format("{} training / {} validation utterances, {} parameters", tr.size(), va.size(),
                    model::count_params(cfg.model)));
  train::TrainOptions opt;
  opt.out_dir = out;
  opt.resume = resume;
  opt.workers = train::worker_count();
  opt.log = print;
  const auto summary = train::run_training<S>(cfg, tr, va, opt);
  print(fmt::format("stopped ({}) after {} epoch(s) this run", summary.stop_reason, summary.epochs.size()));
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const fs::path& data_dir, const fs::path& out, const fs::path& resume) {
  train::RunConfig cfg;
  if (!resume.empty()) {
    cfg = train::load_checkpoint(resume).config;
  } else {
    cfg = config_path.empty() ? train::RunConfig{} : train::load_run_config(config_path);
    std::string extra;
    for (const auto& o : overrides) extra += o + "\n";
    cfg = train::parse_run_config(extra, cfg, "--set");
  }
  fs::create_directories(out);
  {
    std::ofstream c(out / "config.txt");
    c << cfg.to_text();
  }
  if (cfg.train.precision == train::Precision::kFloat64)
    return train_with<double>(cfg, data_dir, out, resume);
  return train_with<float>(cfg, data_dir, out, resume);
}

template <class S>
int eval_with(const train::Checkpoint& ck, const fs::path& data_dir, data::Split split,
              const std::string& report) {
  model::TfGridNet<S> net(ck.config.model, ck.config.stft, train::import_parameters<S>(ck.params));
  const auto utts = data::load_split(data_dir, split, ck.config.stft.sample_rate);
  const auto st = train::evaluate(net, utts, ck.config.train.objective, train::worker_count());
  std::string tsv;
  for (const auto& m : st.utterances) {
    print(fmt::format("{}\tmix {:.2f} dB\test {:.2f} dB\tSI-SDRi {:.2f} dB", m.id, m.sisdr_mix, m.sisdr_est,
                      m.sisdri));
    tsv += fmt::format("{}\t{:.2f}\t{:.2f}\t{:.2f}\n", m.id, m.sisdr_mix, m.sisdr_est, m.sisdri);
  }
  print(fmt::format("mean SI-SDRi over {} utterances: {:.2f} dB (mixture SI-SDR {:.2f} dB)", utts.size(),
                    st.sisdri_db, st.sisdr_mix_db));
  if (!report.empty()) {
    std::ofstream out(report);
    out << tsv;
    if (!out) throw std::runtime_error("cannot write report " + report);
  }
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data_dir, const std::string& split,
             const std::string& report) {
  const auto ck = train::load_checkpoint(ckpt);
  const auto sp = data::parse_split(split);
  if (ck.config.train.precision == train::Precision::kFloat64) return eval_with<double>(ck, data_dir, sp, report);
  return eval_with<float>(ck, data_dir, sp, report);
}

template <class S>
int separate_with(const train::Checkpoint& ck, const signal::Waveform& in, const std::string& prefix) {
  model::TfGridNet<S> net(ck.config.model, ck.config.stft, train::import_parameters<S>(ck.params));
  const double sd = data::standard_deviation(in.samples);
  if (!(sd > 0)) throw UsageError("input is silent; nothing to separate");
  signal::Waveform norm = in;
  for (double& v : norm.samples) v /= sd;
  const auto outs = model::forward_separate(norm, net);
  for (std::size_t c = 0; c < outs.size(); ++c) {
    signal::Waveform w = outs[c];
    for (double& v : w.samples) v *= sd;
    const auto path = fmt::format("{}.spk{}.wav", prefix, c + 1);
    data::wav_write(path, w);
    print(path);
  }
  return 0;
}

int cmd_separate(const fs::path& ckpt, const fs::path& in_path, const std::string& prefix) {
  const auto ck = train::load_checkpoint(ckpt);
  signal::Waveform in;
  try {
    in = data::wav_read(in_path.string());
  } catch (const data::WavError& e) {
    throw UsageError(e.what());
  }
  if (in.sample_rate != ck.config.stft.sample_rate)
    throw UsageError(fmt::format("{}: sample rate {} Hz is not supported (model expects {} Hz)",
                                 in_path.string(), in.sample_rate, ck.config.stft.sample_rate));
  if (in.samples.empty()) throw UsageError(in_path.string() + ": no samples");
  if (ck.config.train.precision == train::Precision::kFloat64) return separate_with<double>(ck, in, prefix);
  return separate_with<float>(ck, in, prefix);
}

int cmd_verify(const std::string& suite) {
  const auto rep = cli::run_suite(suite);
  for (const auto& l : rep.lines)
    print(fmt::format("[{}] {:<44} {}", l.pass ? "PASS" : "FAIL", l.label, l.detail));
  print(fmt::format("suite {}: {}", rep.name, rep.passed() ? "PASS" : "FAIL"));
  return rep.passed() ? 0 : kExitFailure;
}

int cmd_print_config(const std::string& config_path) {
  const auto cfg = config_path.empty() ? train::RunConfig{} : train::load_run_config(config_path);
  std::cout << cfg.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  util::tune_allocator();
  CLI::App app{"gridsep: TF-GridNet monaural speaker separation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic two-source corpus");
  std::string synth_out;
  data::CorpusSpec spec;
  bool force = false, no_audio = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--train", spec.train, "training utterances")->capture_default_str();
  synth->add_option("--valid", spec.valid, "validation utterances")->capture_default_str();
  synth->add_option("--test", spec.test, "test utterances")->capture_default_str();
  synth->add_option("--seed", spec.seed, "corpus seed")->capture_default_str();
  synth->add_flag("--force", force, "overwrite a non-empty output directory");
  synth->add_flag("--no-audio", no_audio, "write manifests only");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string config_path, data_dir, out_dir, resume;
  std::vector<std::string> overrides;
  tr->add_option("--config", config_path, "run configuration file");
  tr->add_option("--set", overrides, "override one config entry, key=value");
  tr->add_option("--data", data_dir, "corpus directory")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--resume", resume, "checkpoint to resume from");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  std::string ckpt, split = "test", report;
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--data", data_dir, "corpus directory")->required();
  ev->add_option("--split", split, "train | valid | test")->capture_default_str();
  ev->add_option("--report", report, "write utt_id, sisdr_mix, sisdr_est, sisdri as TSV");

  auto* sep = app.add_subcommand("separate", "separate one WAV file");
  std::string in_path, prefix;
  sep->add_option("--ckpt", ckpt, "checkpoint")->required();
  sep->add_option("--in", in_path, "input WAV (PCM16 mono)")->required();
  sep->add_option("--out-prefix", prefix, "output prefix; writes <prefix>.spk<c>.wav")->required();

  auto* ver = app.add_subcommand("verify", "run a self-verification suite");
  std::string suite;
  ver->add_option("--suite", suite, "gradcheck | params | stft | losses")
      ->required()
      ->check(CLI::IsMember({"gradcheck", "params", "stft", "losses"}));

  auto* pc = app.add_subcommand("print-config", "print the effective configuration");
  pc->add_option("--config", config_path, "configuration file to merge over the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth_data(synth_out, spec, force, !no_audio);
    if (*tr) return cmd_train(config_path, overrides, data_dir, out_dir, resume);
    if (*ev) return cmd_eval(ckpt, data_dir, split, report);
    if (*sep) return cmd_separate(ckpt, in_path, prefix);
    if (*ver) return cmd_verify(suite);
    if (*pc) return cmd_print_config(config_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const train::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitUsage;
}
