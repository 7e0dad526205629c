#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aural/checkpoint.hpp"
#include "aural/codec.hpp"
#include "aural/evals.hpp"
#include "aural/forge.hpp"
#include "aural/grpo.hpp"
#include "aural/setup.hpp"
#include "aural/trainer.hpp"

using namespace aural;

namespace {

Config load_config(const std::string& path) {
  if (path.empty()) {
    Config cfg;
    cfg.apply_env_overrides();
    return cfg;
  }
  return Config::from_file(path);
}

int cmd_tokenize_synth(uint64_t seed, double duration_s, int64_t n, const std::string& config,
                       const std::string& out, const std::string& codec_out) {
  Config cfg = load_config(config);
  CodecConfig cc = codec_config_from(cfg);
  cc.seed = seed;
  ReasoningCodecState codec = make_codec(cc);
  std::vector<Record> records;
  for (int64_t i = 0; i < n; ++i) {
    records.push_back(codec.tokenize(seed * 1000003 + static_cast<uint64_t>(i), duration_s,
                                     "utt-" + std::to_string(i)));
  }
  write_corpus(out, records);
  if (!codec_out.empty()) save_checkpoint(codec_out, codec.state_arrays());
  std::cout << "wrote " << records.size() << " records to " << out << "\n";
  return 0;
}

int cmd_forge(const std::string& strategy, int64_t ctx, int64_t n, uint64_t seed,
              const std::string& config, const std::string& out, double strength,
              int64_t styles) {
  Config cfg = load_config(config);
  BackboneConfig bc = backbone_config_from(cfg);
  Vocabulary vocab(bc.vocab);

  if (strategy == "planted") {
    SyntheticCorpusSpec spec;
    spec.seed = seed;
    spec.n_records = n;
    spec.dependency_strength = strength;
    spec.n_styles = static_cast<int32_t>(styles);
    spec.vocab = bc.vocab;
    spec.min_duration_s = cfg.get_num("min_duration_s", 1.2);
    spec.max_duration_s = cfg.get_num("max_duration_s", 3.2);
    spec.alphabet = cfg.get_int("alphabet", 0);
    write_corpus(out, synth_corpus(spec));
    std::cout << "wrote " << n << " planted records to " << out << "\n";
    return 0;
  }

  ForgeCodec codec = make_forge_codec(seed ^ 0xf0e9e, bc.vocab);
  Rng rng(seed);

  std::vector<Record> records;
  for (int64_t i = 0; i < n; ++i) {
    int strat;
    if (strategy == "mix") {
      strat = static_cast<int>(rng.randint(1, 6));
    } else {
      strat = std::stoi(strategy);
    }
    Rng srng = rng.fork(static_cast<uint64_t>(i) + 1);
    AuditorySentence sentence;
    switch (strat) {
      case 1: {
        FeatureTriple f = codec.features_of(srng.next_u64(), 4.0 + 0.4 * srng.randint(0, 6));
        sentence = make_segmented(codec.tokenize_recon(f), ctx, vocab, srng);
        break;
      }
      case 2:
      case 3: {
        int np = 1 + static_cast<int>(srng.randint(0, 3));
        std::vector<std::pair<Item, Item>> pairs;
        for (int p = 0; p < np; ++p) {
          FeatureTriple f = codec.features_of(srng.next_u64(), 0.8);
          std::vector<int32_t> caption = {SEP};
          for (int64_t w = srng.randint(2, 6); w > 0; --w) {
            caption.push_back(vocab.encode(
                TokenKind::text, -1, static_cast<int32_t>(srng.randint(0, vocab.n_text()))));
          }
          pairs.emplace_back(codec.tokenize_recon(f), Item::text(caption));
        }
        sentence = make_interleaved(pairs, /*audio_first=*/strat == 2, strat, ctx, vocab);
        break;
      }
      case 4:
        sentence = make_mixture_triples(codec, 0.8, 1 + static_cast<int>(srng.randint(0, 2)),
                                        ctx, srng);
        break;
      case 5: {
        std::vector<AttributeTransform> tr = {
            {1.0, 1.0, 0.0},
            {srng.uniform() < 0.5 ? 2.0 : 1.0, srng.uniform(0.5, 2.0), srng.uniform(-0.3, 0.3)},
        };
        sentence = make_attribute_variants(codec, srng.next_u64(), 1.6, 2, tr, ctx, srng);
        break;
      }
      default:
        std::cerr << "unknown strategy " << strategy << "\n";
        return 1;
    }
    records.push_back(sentence_to_record(sentence, vocab, "forge-" + std::to_string(i)));
  }
  write_corpus(out, records);
  std::cout << "wrote " << records.size() << " sentences to " << out << "\n";
  return 0;
}

int cmd_train(int stage, const std::string& config, const std::string& corpus_path,
              const std::string& ckpt_in, const std::string& ckpt_out,
              const std::string& metrics) {
  Config cfg = load_config(config);
  BackboneConfig bc = backbone_config_from(cfg);
  StageSpec spec = stage_spec_from(cfg, stage);

  ParamStore store;
  if (!ckpt_in.empty()) {
    for (auto& [name, arr] : load_checkpoint(ckpt_in)) store.add(name, std::move(arr));
  } else {
    store = init_backbone(bc, static_cast<uint64_t>(cfg.get_int("init_seed", 7)));
  }
  std::vector<Record> corpus = read_corpus(corpus_path);
  StageResult res = run_stage(spec, bc, store, corpus, metrics);
  std::cout << "stage " << stage << ": loss " << res.first_loss << " -> " << res.last_loss
            << " over " << res.history.size() << " steps\n";
  if (!ckpt_out.empty()) {
    save_checkpoint(ckpt_out, store.params);
    std::cout << "saved checkpoint to " << ckpt_out << "\n";
  }
  return 0;
}

int cmd_grpo_train(int64_t groups, int g, double epsilon, double kl, double lr,
                   const std::string& config, const std::string& out, uint64_t seed) {
  Config cfg = load_config(config);
  BackboneConfig bc = backbone_config_from(cfg);
  Vocabulary vocab(bc.vocab);
  ParamStore store = init_backbone(bc, static_cast<uint64_t>(cfg.get_int("init_seed", 7)));
  for (const char* grp : {"embed", "understand", "crossmodal", "generate", "head"}) {
    store.trainable_groups.insert(grp);
  }
  AdamWConfig ocfg;
  ocfg.lr = lr;
  AdamW opt(ocfg);

  std::ofstream csv;
  if (!out.empty()) {
    csv.open(out, std::ios::trunc);
    csv << "step,mean_reward,surrogate,kl\n";
  }
  Rng rng(seed);
  int64_t cap = cfg.get_int("grpo_cap", 128);
  for (int64_t step = 0; step < groups; ++step) {
    EchoTask task = make_echo_task(vocab, 3, rng);
    RolloutGroup group = rollout(bc, store, task, g, 1.0, cap, rng.next_u64());
    Tape tape(Dtype::f32, /*check_finite=*/false);
    GrpoStepOut obj = grpo_step_objective(tape, bc, store, task.query, group, epsilon, kl);
    GradMap grads = tape.backward(obj.loss_for_grad);
    opt.step(store, grads, lr);
    std::cout << "step " << step << " reward " << obj.mean_reward << " surrogate "
              << obj.surrogate << " kl " << obj.kl << "\n";
    if (csv.is_open()) {
      csv << step << "," << obj.mean_reward << "," << obj.surrogate << "," << obj.kl << "\n";
    }
  }
  return 0;
}

int cmd_eval(const std::string& mode, const std::string& corpus_path, const std::string& config,
             const std::string& ckpt, const std::string& condition,
             const std::string& report_path) {
  Config cfg = load_config(config);
  BackboneConfig bc = backbone_config_from(cfg);
  std::vector<Record> corpus = read_corpus(corpus_path);

  EvalReport rep;
  if (mode == "entropy") {
    Vocabulary vocab(bc.vocab);
    EntropyGap gap = entropy_gap(tally_symbols(corpus, vocab));
    rep.h_s_given_x = gap.h_s_given_x;
    rep.h_s_given_xr = gap.h_s_given_xr;
    rep.mi_s_r_given_x = gap.mi_s_r_given_x;
  } else {
    ParamStore store;
    if (!ckpt.empty()) {
      for (auto& [name, arr] : load_checkpoint(ckpt)) store.add(name, std::move(arr));
    } else {
      store = init_backbone(bc, static_cast<uint64_t>(cfg.get_int("init_seed", 7)));
    }
    ConditionMode cm = condition == "without" ? ConditionMode::without_reasoning
                                              : ConditionMode::with_reasoning;
    rep = mode == "acc" ? eval_accuracy(bc, store, corpus)
                        : eval_ppl_per_codebook(bc, store, corpus, cm);
  }
  std::string json = rep.to_json();
  if (!report_path.empty()) {
    std::ofstream os(report_path, std::ios::trunc);
    os << json << "\n";
  }
  std::cout << json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multi-stream audio-token language model lab"};
  app.require_subcommand(1);

  // tokenize-synth
  auto* tok = app.add_subcommand("tokenize-synth",
                                 "emit paired reasoning/reconstruction token records");
  uint64_t tok_seed = 1;
  double tok_dur = 4.0;
  int64_t tok_n = 16;
  std::string tok_cfg, tok_out = "corpus.jsonl", tok_codec_out;
  tok->add_option("--seed", tok_seed, "codec + data seed");
  tok->add_option("--duration-s", tok_dur, "utterance duration in seconds");
  tok->add_option("--n", tok_n, "number of records");
  tok->add_option("--config", tok_cfg, "flat key=value config file");
  tok->add_option("--out", tok_out, "output JSONL path")->required();
  tok->add_option("--codec-out", tok_codec_out, "also save codec state here");

  // forge
  auto* forge = app.add_subcommand("forge", "construct auditory sentences");
  std::string forge_strategy = "mix";
  int64_t forge_ctx = 2048, forge_n = 64;
  uint64_t forge_seed = 1;
  std::string forge_cfg, forge_out = "sentences.jsonl";
  double forge_strength = 0.9;
  int64_t forge_styles = 4;
  forge->add_option("--strategy", forge_strategy, "1..5, mix, or planted");
  forge->add_option("--strength", forge_strength, "dependency strength for planted corpora");
  forge->add_option("--styles", forge_styles, "style alphabet for planted corpora");
  forge->add_option("--ctx", forge_ctx, "context budget");
  forge->add_option("--n", forge_n, "number of sentences");
  forge->add_option("--seed", forge_seed, "seed");
  forge->add_option("--config", forge_cfg, "config file");
  forge->add_option("--out", forge_out, "output JSONL path")->required();

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage = 3;
  std::string train_cfg, train_corpus, train_in, train_out, train_metrics;
  train->add_option("--stage", train_stage, "stage 1..4")->required();
  train->add_option("--config", train_cfg, "config file");
  train->add_option("--corpus", train_corpus, "training corpus JSONL")->required();
  train->add_option("--in", train_in, "input checkpoint");
  train->add_option("--out", train_out, "output checkpoint");
  train->add_option("--metrics", train_metrics, "per-step metrics CSV");

  // grpo-train
  auto* grpo = app.add_subcommand("grpo-train", "policy-gradient fine-tuning on a synthetic task");
  int64_t grpo_groups = 20;
  int grpo_g = 8;
  double grpo_eps = 0.2, grpo_kl = 0.04, grpo_lr = 1e-4;
  uint64_t grpo_seed = 1;
  std::string grpo_cfg, grpo_out;
  grpo->add_option("--groups", grpo_groups, "number of rollout groups (steps)");
  grpo->add_option("--g", grpo_g, "rollouts per group");
  grpo->add_option("--epsilon", grpo_eps, "clip range");
  grpo->add_option("--kl", grpo_kl, "KL coefficient");
  grpo->add_option("--lr", grpo_lr, "learning rate");
  grpo->add_option("--seed", grpo_seed, "seed");
  grpo->add_option("--config", grpo_cfg, "config file");
  grpo->add_option("--out", grpo_out, "metrics CSV");

  // eval
  auto* eval = app.add_subcommand("eval", "perplexity / accuracy / entropy reports");
  std::string eval_mode = "ppl", eval_corpus, eval_cfg, eval_ckpt, eval_cond = "with",
              eval_report;
  eval->add_option("--mode", eval_mode, "ppl | acc | entropy")->required();
  eval->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
  eval->add_option("--config", eval_cfg, "config file");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint to evaluate");
  eval->add_option("--condition", eval_cond, "with | without (reasoning prefix)");
  eval->add_option("--report", eval_report, "write the JSON report here");

  // checkpoint
  auto* ck = app.add_subcommand("checkpoint", "inspect or diff checkpoints");
  auto* ck_inspect = ck->add_subcommand("inspect", "list records");
  std::string ck_path;
  ck_inspect->add_option("path", ck_path, "checkpoint file")->required();
  auto* ck_diff = ck->add_subcommand("diff", "compare two checkpoints");
  std::string ck_a, ck_b;
  ck_diff->add_option("a", ck_a, "first checkpoint")->required();
  ck_diff->add_option("b", ck_b, "second checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tok->parsed()) {
      return cmd_tokenize_synth(tok_seed, tok_dur, tok_n, tok_cfg, tok_out, tok_codec_out);
    }
    if (forge->parsed()) {
      return cmd_forge(forge_strategy, forge_ctx, forge_n, forge_seed, forge_cfg, forge_out,
                       forge_strength, forge_styles);
    }
    if (train->parsed()) {
      return cmd_train(train_stage, train_cfg, train_corpus, train_in, train_out, train_metrics);
    }
    if (grpo->parsed()) {
      return cmd_grpo_train(grpo_groups, grpo_g, grpo_eps, grpo_kl, grpo_lr, grpo_cfg, grpo_out,
                            grpo_seed);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_mode, eval_corpus, eval_cfg, eval_ckpt, eval_cond, eval_report);
    }
    if (ck->parsed()) {
      if (ck_inspect->parsed()) {
        std::cout << inspect_checkpoint(ck_path);
        return 0;
      }
      if (ck_diff->parsed()) {
        auto diff = diff_checkpoints(ck_a, ck_b);
        if (diff.empty()) {
          std::cout << "identical\n";
        } else {
          for (const auto& name : diff) std::cout << name << "\n";
        }
        return diff.empty() ? 0 : 1;
      }
      std::cerr << "checkpoint: expected 'inspect' or 'diff'\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
