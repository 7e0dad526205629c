#include "aural/setup.hpp"

namespace aural {

BackboneConfig backbone_config_from(const Config& cfg) {
  BackboneConfig bc;
  bc.d_model = cfg.get_int("d_model", 64);
  bc.n_heads = static_cast<int>(cfg.get_int("n_heads", 4));
  bc.n_understand = static_cast<int>(cfg.get_int("n_understand", 2));
  bc.n_crossmodal = static_cast<int>(cfg.get_int("n_crossmodal", 4));
  bc.n_generate = static_cast<int>(cfg.get_int("n_generate", 2));
  bc.n_local = static_cast<int>(cfg.get_int("n_local", 2));
  bc.d_local = cfg.get_int("d_local", 32);
  bc.n_local_heads = static_cast<int>(cfg.get_int("n_local_heads", 4));
  bc.t_max = cfg.get_int("t_max", 512);
  bc.rope_base = cfg.get_num("rope_base", 10000.0);
  bc.d_distill = cfg.get_int("d_distill", 16);
  bc.vocab.n_text = static_cast<int32_t>(cfg.get_int("n_text", 64));
  bc.vocab.n_reason_per_book = static_cast<int32_t>(cfg.get_int("n_reason_per_book", 64));
  bc.vocab.n_recon_per_book = static_cast<int32_t>(cfg.get_int("n_recon_per_book", 64));
  bc.vocab.n_books = static_cast<int>(cfg.get_int("n_books", 8));
  return bc;
}

StageSpec stage_spec_from(const Config& cfg, int stage) {
  StageSpec spec = make_stage_spec(stage);
  spec.steps = cfg.get_int("steps", spec.steps);
  spec.lr = cfg.get_num("lr", spec.lr);
  spec.warmup = cfg.get_int("warmup", spec.warmup);
  spec.ctx = cfg.get_int("ctx", spec.ctx);
  spec.lambda_text = cfg.get_num("lambda_text", spec.lambda_text);
  spec.lambda_audio = cfg.get_num("lambda_audio", spec.lambda_audio);
  spec.lambda_rec = cfg.get_num("lambda_rec", spec.lambda_rec);
  spec.drop_reason_p = cfg.get_num("drop_reason_p", spec.drop_reason_p);
  spec.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  return spec;
}

CodecConfig codec_config_from(const Config& cfg) {
  CodecConfig cc;
  cc.seed = static_cast<uint64_t>(cfg.get_int("codec_seed", 17));
  cc.vocab.n_text = static_cast<int32_t>(cfg.get_int("n_text", 64));
  cc.vocab.n_reason_per_book = static_cast<int32_t>(cfg.get_int("n_reason_per_book", 64));
  cc.vocab.n_recon_per_book = static_cast<int32_t>(cfg.get_int("n_recon_per_book", 64));
  cc.vocab.n_books = static_cast<int>(cfg.get_int("n_books", 8));
  cc.qc.n_blocks = static_cast<int>(cfg.get_int("qc_blocks", 4));
  cc.qc.n_heads = static_cast<int>(cfg.get_int("qc_heads", 4));
  cc.qc.max_queries = cfg.get_int("qc_max_queries", 128);
  cc.bank.bank_seed = static_cast<uint64_t>(cfg.get_int("bank_seed", 17));
  return cc;
}

}  // namespace aural
