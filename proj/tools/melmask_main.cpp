// Copyright (c) 2026 melmask authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "melmask/config.hpp"
#include "melmask/io.hpp"
#include "melmask/mask.hpp"
#include "melmask/pipeline.hpp"
#include "melmask/speaker.hpp"
#include "melmask/tts.hpp"

namespace {

using melmask::FullConfig;
namespace pl = melmask::pipeline;

struct CommonOpts {
  std::string config;
  std::uint64_t seed = 1234;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "JSON config file (defaults used when omitted)");
  cmd->add_option("--seed", opts.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out-dir", opts.out_dir, "Output directory")->required();
}

FullConfig load_or_default(const CommonOpts& opts) {
  if (opts.config.empty()) return FullConfig{};
  return melmask::load_config(opts.config);
}

void echo_config(const FullConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/config.json", std::ios::binary);
  out << melmask::config_to_json(cfg);
}

melmask::tts::SymbolSequence parse_symbols(const std::string& text) {
  melmask::tts::SymbolSequence symbols;
  std::string token;
  for (char ch : text + ",") {
    if (ch == ',' || ch == ' ') {
      if (!token.empty()) {
        const unsigned long v = std::stoul(token);
        if (v >= melmask::tts::kNumBaseSymbols) {
          throw std::invalid_argument("symbol " + token + " outside the base alphabet [0, " +
                                      std::to_string(melmask::tts::kNumBaseSymbols - 1) + "]");
        }
        symbols.push_back(static_cast<std::size_t>(v));
        token.clear();
      }
    } else {
      token += ch;
    }
  }
  if (symbols.empty()) throw std::invalid_argument("no symbols given");
  return symbols;
}

const melmask::speaker::SpeakerEmbedding& find_embedding(
    const std::vector<std::pair<std::string, melmask::speaker::SpeakerEmbedding>>& table,
    const std::string& id) {
  for (const auto& [name, emb] : table) {
    if (name == id) return emb;
  }
  throw std::invalid_argument("speaker '" + id + "' not in the embeddings file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust personalized mel synthesis pipeline"};
  app.require_subcommand(1);

  CommonOpts datagen_opts;
  CLI::App* datagen = app.add_subcommand("datagen", "Generate the synthetic corpus");
  add_common(datagen, datagen_opts);

  CommonOpts augment_opts;
  std::string augment_in_dir;
  CLI::App* augment = app.add_subcommand("augment", "Add noise to an existing WAV corpus");
  add_common(augment, augment_opts);
  augment->add_option("--in-dir", augment_in_dir, "Directory of <speaker>/*.wav files")
      ->required();

  CommonOpts trainenh_opts;
  std::string trainenh_corpus;
  CLI::App* trainenh = app.add_subcommand("train-enhancer", "Train the mask-prediction model");
  add_common(trainenh, trainenh_opts);
  trainenh->add_option("--corpus", trainenh_corpus, "Corpus directory")->required();

  CommonOpts evalenh_opts;
  std::string evalenh_corpus, evalenh_ckpt;
  CLI::App* evalenh = app.add_subcommand("eval-enhancer", "SI-SDR table on held-out noisy data");
  add_common(evalenh, evalenh_opts);
  evalenh->add_option("--corpus", evalenh_corpus, "Corpus directory")->required();
  evalenh->add_option("--enhancer", evalenh_ckpt, "Enhancer checkpoint")->required();

  CommonOpts pretrain_opts;
  std::string pretrain_corpus, pretrain_enh;
  CLI::App* pretrain = app.add_subcommand("pretrain", "Multi-speaker synthesis pretraining");
  add_common(pretrain, pretrain_opts);
  pretrain->add_option("--corpus", pretrain_corpus, "Corpus directory")->required();
  pretrain->add_option("--enhancer", pretrain_enh,
                       "Enhancer checkpoint (needed when mask_source is 'predicted')");

  CommonOpts adapt_opts;
  std::string adapt_corpus, adapt_ckpt, adapt_enh;
  CLI::App* adapt = app.add_subcommand("adapt", "Fine-tune on the noisy target speaker");
  add_common(adapt, adapt_opts);
  adapt->add_option("--corpus", adapt_corpus, "Corpus directory")->required();
  adapt->add_option("--checkpoint", adapt_ckpt, "Pretrain-stage checkpoint")->required();
  adapt->add_option("--enhancer", adapt_enh,
                    "Enhancer checkpoint (needed when mask_source is 'predicted')");

  CommonOpts synth_opts;
  std::string synth_ckpt, synth_embeddings, synth_speaker, synth_text, synth_mask_mode = "clean";
  std::string synth_mask_file, synth_stem = "synth";
  CLI::App* synth = app.add_subcommand("synth", "Free-running synthesis from a checkpoint");
  add_common(synth, synth_opts);
  synth->add_option("--checkpoint", synth_ckpt, "Synthesis checkpoint")->required();
  synth->add_option("--embeddings", synth_embeddings, "Speaker embeddings file")->required();
  synth->add_option("--speaker", synth_speaker, "Speaker id to synthesize")->required();
  synth->add_option("--text", synth_text, "Comma- or space-separated symbol ids")->required();
  synth->add_option("--mask-mode", synth_mask_mode, "'clean' or 'reference'")->capture_default_str();
  synth->add_option("--mask", synth_mask_file, "MASK file for reference mode");
  synth->add_option("--stem", synth_stem, "Output file stem")->capture_default_str();

  CommonOpts evalsim_opts;
  std::string evalsim_corpus, evalsim_ckpt, evalsim_embeddings;
  bool evalsim_self = false;
  CLI::App* evalsim = app.add_subcommand("eval-similarity", "Speaker similarity of synthesized mels");
  add_common(evalsim, evalsim_opts);
  evalsim->add_option("--corpus", evalsim_corpus, "Corpus directory")->required();
  evalsim->add_option("--checkpoint", evalsim_ckpt, "Synthesis checkpoint")->required();
  evalsim->add_option("--embeddings", evalsim_embeddings, "Speaker embeddings file")->required();
  evalsim->add_flag("--self-test", evalsim_self, "Compare training centroids with themselves");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(datagen)) {
      const FullConfig cfg = load_or_default(datagen_opts);
      echo_config(cfg, datagen_opts.out_dir);
      pl::Corpus corpus = pl::run_datagen(cfg, datagen_opts.seed, datagen_opts.out_dir);
      std::cout << "datagen: " << corpus.utterances.size() << " utterances from "
                << corpus.specs.size() << " speakers -> " << datagen_opts.out_dir << "/corpus\n";
    } else if (app.got_subcommand(augment)) {
      const FullConfig cfg = load_or_default(augment_opts);
      echo_config(cfg, augment_opts.out_dir);
      melmask::Rng rng(augment_opts.seed);
      const std::vector<pl::NoiseKind> kinds = {pl::NoiseKind::filtered_white,
                                                pl::NoiseKind::tonal, pl::NoiseKind::chirp};
      pl::Corpus corpus = pl::augment_wav_corpus(augment_in_dir, kinds,
                                                 cfg.pipeline.snr_levels, cfg.dsp, rng);
      pl::save_corpus(corpus, augment_opts.out_dir + "/corpus");
      std::cout << "augment: " << corpus.utterances.size() << " noisy mixtures -> "
                << augment_opts.out_dir << "/corpus\n";
    } else if (app.got_subcommand(trainenh)) {
      const FullConfig cfg = load_or_default(trainenh_opts);
      echo_config(cfg, trainenh_opts.out_dir);
      pl::TrainEnhancerResult r = pl::run_train_enhancer(cfg, trainenh_corpus,
                                                         trainenh_opts.seed,
                                                         trainenh_opts.out_dir);
      std::cout << "train-enhancer: " << r.loss_curve.size() << " steps, final loss "
                << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << " -> "
                << r.checkpoint_path << "\n";
    } else if (app.got_subcommand(evalenh)) {
      const FullConfig cfg = load_or_default(evalenh_opts);
      echo_config(cfg, evalenh_opts.out_dir);
      auto rows = pl::run_eval_enhancer(evalenh_corpus, evalenh_ckpt, evalenh_opts.out_dir);
      for (const auto& row : rows) {
        std::cout << "eval-enhancer: snr " << row.snr_db << " dB: noisy "
                  << row.noisy_sisdr_db << " dB, enhanced " << row.enhanced_sisdr_db << " dB\n";
      }
    } else if (app.got_subcommand(pretrain)) {
      const FullConfig cfg = load_or_default(pretrain_opts);
      echo_config(cfg, pretrain_opts.out_dir);
      pl::PretrainResult r = pl::run_pretrain(cfg, pretrain_corpus, pretrain_enh,
                                              pretrain_opts.seed, pretrain_opts.out_dir);
      std::cout << "pretrain: " << r.loss_curve.size() << " steps, final loss "
                << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << " -> "
                << r.checkpoint_path << "\n";
    } else if (app.got_subcommand(adapt)) {
      const FullConfig cfg = load_or_default(adapt_opts);
      echo_config(cfg, adapt_opts.out_dir);
      pl::AdaptResult r = pl::run_adapt(cfg, adapt_corpus, adapt_ckpt, adapt_enh,
                                        adapt_opts.seed, adapt_opts.out_dir);
      std::cout << "adapt: " << r.loss_curve.size() << " steps, final loss "
                << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << " -> "
                << r.checkpoint_path << "\n";
    } else if (app.got_subcommand(synth)) {
      const FullConfig cfg = load_or_default(synth_opts);
      echo_config(cfg, synth_opts.out_dir);
      melmask::tts::TtsModel model = melmask::tts::TtsModel::load(synth_ckpt);
      auto table = melmask::speaker::load_embeddings(synth_embeddings);
      const auto& spk = find_embedding(table, synth_speaker);
      const auto symbols = pl::with_markers(parse_symbols(synth_text));

      pl::MaskMode mode;
      melmask::mask::DenoiseMask ref;
      const melmask::mask::DenoiseMask* ref_ptr = nullptr;
      if (synth_mask_mode == "clean") {
        mode = pl::MaskMode::clean;
      } else if (synth_mask_mode == "reference") {
        mode = pl::MaskMode::reference;
        if (synth_mask_file.empty()) {
          throw std::invalid_argument("reference mask mode needs --mask");
        }
        ref.values = melmask::io::read_mask(synth_mask_file).bins;
        ref.kind = melmask::mask::MaskKind::predicted;
        ref_ptr = &ref;
      } else {
        throw std::invalid_argument("--mask-mode must be 'clean' or 'reference'");
      }
      pl::InferResult r = pl::run_infer(model, symbols, spk, mode, ref_ptr, cfg.dsp,
                                        synth_opts.out_dir, synth_stem);
      std::cout << "synth: " << r.after_log.rows << " frames -> " << synth_opts.out_dir << "/"
                << synth_stem << "_after.mels\n";
    } else if (app.got_subcommand(evalsim)) {
      const FullConfig cfg = load_or_default(evalsim_opts);
      echo_config(cfg, evalsim_opts.out_dir);
      auto rows = pl::run_eval_similarity(cfg, evalsim_corpus, evalsim_ckpt, evalsim_embeddings,
                                          evalsim_opts.out_dir, evalsim_self);
      for (const auto& row : rows) {
        std::cout << "eval-similarity: " << row.speaker_id << " cosine " << row.cosine
                  << (row.same_speaker ? " (same speaker)" : " (different)") << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
