#include "aural/codec.hpp"

#include <stdexcept>

namespace aural {

ReasoningCodecState make_codec(CodecConfig cfg) {
  cfg.qc.d = cfg.bank.d_reason_in;
  cfg.qc.interleave = 5;
  cfg.film.d_reason = cfg.qc.d;
  cfg.film.d_feature = cfg.bank.d_env;

  ReasoningCodecState codec{cfg, SyntheticFeatureBank(cfg.bank), {}, {}, {}, {}, {}};
  Rng rng(cfg.seed);
  init_query_compressor(codec.params, cfg.qc, rng);
  init_film(codec.params, cfg.film, rng);
  for (int i = 0; i < cfg.vocab.n_books; ++i) {
    codec.reason_books.push_back(Codebook::make(cfg.vocab.n_reason_per_book, cfg.qc.d, rng));
  }
  codec.book_ph = Codebook::make(cfg.vocab.n_recon_per_book, cfg.bank.d_ph, rng);
  codec.book_mu = Codebook::make(cfg.vocab.n_recon_per_book, cfg.bank.d_mu, rng);
  for (int i = 0; i < 6; ++i) {
    codec.env_books.push_back(Codebook::make(cfg.vocab.n_recon_per_book, cfg.bank.d_env, rng));
  }
  return codec;
}

Record ReasoningCodecState::tokenize(uint64_t utterance_seed, double duration_s,
                                     const std::string& id) const {
  Vocabulary vocab(cfg.vocab);
  FeatureSet fs = bank.features(utterance_seed, duration_s);

  // Reasoning branch: compress 25 Hz input features to 5 Hz query states,
  // then 8-level residual quantization.
  Tape tape(Dtype::f32, /*check_finite=*/false);
  Tensor h = tape.constant(fs.h_reason_in);
  Tensor z = query_compress(tape, params, cfg.qc, h);
  RvqResult reason = rvq_quantize(z.value(), reason_books, cfg.vocab.n_books);

  int64_t n_reason = z.value().shape[0];
  std::vector<std::vector<int32_t>> reason_frames(n_reason,
                                                  std::vector<int32_t>(cfg.vocab.n_books));
  for (int64_t f = 0; f < n_reason; ++f) {
    for (int lvl = 0; lvl < cfg.vocab.n_books; ++lvl) {
      reason_frames[f][lvl] = vocab.encode(TokenKind::reason, lvl, reason.codes[lvl][f]);
    }
  }

  // Reconstruction branch: FiLM the environment features with the quantized
  // reasoning states (upsampled 5 Hz -> 12.5 Hz), then 1:1:6 group-wise VQ.
  Tensor s_e = tape.constant(fs.h_env);
  Tensor r_hat = tape.constant(reason.quantized);
  Tensor env_mod = film_modulate(tape, params, cfg.film, s_e, r_hat);
  GroupwiseResult recon =
      groupwise_quantize(fs.h_ph, fs.h_mu, env_mod.value(), book_ph, book_mu, env_books);

  int64_t n_recon = fs.h_ph.shape[0];
  std::vector<std::vector<int32_t>> recon_frames(n_recon,
                                                 std::vector<int32_t>(cfg.vocab.n_books));
  for (int64_t t = 0; t < n_recon; ++t) {
    for (int s = 0; s < cfg.vocab.n_books; ++s) {
      recon_frames[t][s] = vocab.encode(TokenKind::recon, s, recon.streams[s][t]);
    }
  }

  Record rec;
  rec.id = id;
  rec.items.push_back(Item::audio(Item::Kind::reason, std::move(reason_frames)));
  rec.items.push_back(Item::audio(Item::Kind::recon, std::move(recon_frames)));
  rec.meta_num["duration_s"] = duration_s;
  rec.meta_num["utterance_seed"] = static_cast<double>(utterance_seed);
  rec.meta_str["kind"] = "codec";
  return rec;
}

std::map<std::string, Array> ReasoningCodecState::state_arrays() const {
  std::map<std::string, Array> out = params.params;
  auto put_book = [&](const std::string& name, const Codebook& book) {
    out[name + ".entries"] = book.entries;
    out[name + ".ema_weight"] = book.ema_weight;
    out[name + ".ema_sum"] = book.ema_sum;
  };
  for (size_t i = 0; i < reason_books.size(); ++i) {
    put_book("rvq.reason" + std::to_string(i), reason_books[i]);
  }
  put_book("vq.ph", book_ph);
  put_book("vq.mu", book_mu);
  for (size_t i = 0; i < env_books.size(); ++i) {
    put_book("rvq.env" + std::to_string(i), env_books[i]);
  }
  return out;
}

}  // namespace aural
