#include "aural/quant.hpp"

#include <cmath>
#include <stdexcept>

namespace aural {

Codebook Codebook::make(int64_t n_codes, int64_t d, Rng& rng, double scale) {
  if (n_codes < 2) throw std::invalid_argument("codebook needs at least 2 entries");
  Codebook book;
  book.entries = Array::zeros({n_codes, d});
  for (int64_t i = d; i < n_codes * d; ++i) book.entries.data[i] = rng.normal() * scale;
  book.usage.assign(n_codes, 0);
  book.ema_weight = Array::full({n_codes}, 1.0);
  book.ema_sum = book.entries;  // consistent with entries at init
  return book;
}

VqResult vq_quantize(const Array& x, const Codebook& book, bool train, double beta) {
  if (book.n_codes() == 0 || book.entries.data.empty()) {
    throw std::invalid_argument("vq_quantize: empty codebook");
  }
  if (x.rank() != 2 || x.shape[1] != book.dim()) {
    throw std::invalid_argument("vq_quantize: frames must be [n, " + std::to_string(book.dim()) +
                                "], got " + shape_str(x.shape));
  }
  int64_t n = x.shape[0], d = book.dim(), nc = book.n_codes();
  VqResult res;
  res.codes.resize(n);
  res.quantized = Array::zeros(x.shape);
  res.residual = Array::zeros(x.shape);
  double sq_err = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* xv = x.data.data() + i * d;
    int32_t best = 0;
    double best_dist = 0.0;
    for (int64_t c = 0; c < nc; ++c) {
      const double* e = book.entries.data.data() + c * d;
      double dist = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        double diff = xv[j] - e[j];
        dist += diff * diff;
      }
      if (c == 0 || dist < best_dist) {
        best = static_cast<int32_t>(c);
        best_dist = dist;
      }
    }
    res.codes[i] = best;
    const double* e = book.entries.data.data() + best * d;
    for (int64_t j = 0; j < d; ++j) {
      res.quantized.data[i * d + j] = e[j];
      res.residual.data[i * d + j] = xv[j] - e[j];
    }
    sq_err += best_dist;
  }
  if (train) res.commit_loss = beta * sq_err / static_cast<double>(x.numel());
  return res;
}

RvqResult rvq_quantize(const Array& x, const std::vector<Codebook>& books, int n_levels,
                       bool train, double beta) {
  if (n_levels < 1 || n_levels > static_cast<int>(books.size())) {
    throw std::invalid_argument("rvq_quantize: n_levels must be in [1, " +
                                std::to_string(books.size()) + "], got " +
                                std::to_string(n_levels));
  }
  RvqResult res;
  res.quantized = Array::zeros(x.shape);
  res.residual = x;
  int64_t n = x.shape[0], d = x.shape[1];
  for (int lvl = 0; lvl < n_levels; ++lvl) {
    VqResult step = vq_quantize(res.residual, books[lvl], train, beta);
    res.codes.push_back(step.codes);
    res.commit_loss += step.commit_loss;
    for (int64_t i = 0; i < x.numel(); ++i) {
      res.quantized.data[i] += step.quantized.data[i];
      res.residual.data[i] = step.residual.data[i];
    }
    double norm_sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        double v = res.residual.data[i * d + j];
        s += v * v;
      }
      norm_sum += std::sqrt(s);
    }
    res.residual_norms.push_back(norm_sum / static_cast<double>(n));
  }
  return res;
}

GroupwiseResult groupwise_quantize(const Array& h_ph, const Array& h_mu, const Array& h_env,
                                   const Codebook& book_ph, const Codebook& book_mu,
                                   const std::vector<Codebook>& books_env, bool train) {
  if (h_ph.shape[0] != h_mu.shape[0] || h_ph.shape[0] != h_env.shape[0]) {
    throw std::invalid_argument("groupwise_quantize: streams must be time-aligned, got " +
                                std::to_string(h_ph.shape[0]) + "/" +
                                std::to_string(h_mu.shape[0]) + "/" +
                                std::to_string(h_env.shape[0]) + " frames");
  }
  if (books_env.size() != 6) {
    throw std::invalid_argument("groupwise_quantize: environment group takes exactly 6 books");
  }
  GroupwiseResult res;
  res.ph = vq_quantize(h_ph, book_ph, train);
  res.mu = vq_quantize(h_mu, book_mu, train);
  res.env = rvq_quantize(h_env, books_env, 6, train);
  res.streams.resize(8);
  res.streams[0] = res.ph.codes;
  res.streams[1] = res.mu.codes;
  for (int lvl = 0; lvl < 6; ++lvl) res.streams[2 + lvl] = res.env.codes[lvl];
  return res;
}

Array dequantize(const std::vector<const Codebook*>& books,
                 const std::vector<std::vector<int32_t>>& codes) {
  if (books.size() != codes.size()) {
    throw std::invalid_argument("dequantize: books/codes level count mismatch");
  }
  if (books.empty()) throw std::invalid_argument("dequantize: no levels");
  int64_t n = static_cast<int64_t>(codes[0].size());
  int64_t d = books[0]->dim();
  Array out = Array::zeros({n, d});
  for (size_t lvl = 0; lvl < books.size(); ++lvl) {
    const Codebook& book = *books[lvl];
    for (int64_t i = 0; i < n; ++i) {
      const double* e = book.entries.data.data() + codes[lvl][i] * d;
      for (int64_t j = 0; j < d; ++j) out.data[i * d + j] += e[j];
    }
  }
  return out;
}

void update_codebook(Codebook& book, const Array& x, const std::vector<int32_t>& codes,
                     UpdateMode mode, double decay, double lr) {
  int64_t d = book.dim(), nc = book.n_codes();
  int64_t n = x.shape[0];
  for (int64_t i = 0; i < n; ++i) book.usage[codes[i]] += 1;

  if (mode == UpdateMode::ema) {
    std::vector<double> count(nc, 0.0);
    Array sum = Array::zeros({nc, d});
    for (int64_t i = 0; i < n; ++i) {
      count[codes[i]] += 1.0;
      for (int64_t j = 0; j < d; ++j) sum.data[codes[i] * d + j] += x.data[i * d + j];
    }
    for (int64_t c = 1; c < nc; ++c) {  // entry 0 stays the zero vector
      book.ema_weight.data[c] = decay * book.ema_weight.data[c] + (1.0 - decay) * count[c];
      for (int64_t j = 0; j < d; ++j) {
        book.ema_sum.data[c * d + j] =
            decay * book.ema_sum.data[c * d + j] + (1.0 - decay) * sum.data[c * d + j];
      }
      double w = book.ema_weight.data[c];
      if (w > 1e-8) {
        for (int64_t j = 0; j < d; ++j) book.entries.data[c * d + j] = book.ema_sum.data[c * d + j] / w;
      }
    }
  } else {
    // SGD on the codebook loss ||sg(x) - e||^2: pull selected entries toward
    // their assigned inputs.
    for (int64_t i = 0; i < n; ++i) {
      int32_t c = codes[i];
      if (c == 0) continue;
      for (int64_t j = 0; j < d; ++j) {
        double e = book.entries.data[c * d + j];
        book.entries.data[c * d + j] = e + lr * (x.data[i * d + j] - e);
      }
    }
  }
}

void reseed_dead_entries(Codebook& book, const Array& batch, Rng& rng) {
  int64_t d = book.dim();
  int64_t n = batch.shape[0];
  for (int64_t c = 1; c < book.n_codes(); ++c) {
    if (book.usage[c] != 0) continue;
    int64_t row = rng.randint(0, n);
    for (int64_t j = 0; j < d; ++j) {
      book.entries.data[c * d + j] = batch.data[row * d + j];
      book.ema_sum.data[c * d + j] = batch.data[row * d + j];
    }
    book.ema_weight.data[c] = 1.0;
  }
  std::fill(book.usage.begin(), book.usage.end(), 0);
}

StraightThrough vq_straight_through(Tape& tape, Tensor x, const Codebook& book, double beta) {
  VqResult res = vq_quantize(x.value(), book, true, beta);
  // q = x + (q_hard - x): identity Jacobian toward x, quantized value forward.
  Array delta = res.quantized;
  for (int64_t i = 0; i < delta.numel(); ++i) delta.data[i] -= x.value().data[i];
  Tensor q = tape.add(x, tape.constant(std::move(delta)));

  // beta * MSE(x, stopgrad(q)).
  Array neg_q = res.quantized;
  for (double& v : neg_q.data) v = -v;
  Tensor diff = tape.add(x, tape.constant(std::move(neg_q)));
  Tensor commit = tape.mul_scalar(tape.sum_of_squares(diff),
                                  beta / static_cast<double>(x.value().numel()));
  return {q, commit, std::move(res.codes)};
}

int64_t compressed_len(int64_t T, int interleave) {
  return (T + interleave - 1) / interleave;
}

void init_query_compressor(ParamStore& store, const QueryCompressorConfig& cfg, Rng& rng) {
  init_embedding(store, "qc.queries", cfg.max_queries, cfg.d, rng, 0.02);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    init_cross_attention_block(store, "qc.blk" + std::to_string(i), cfg.d, rng);
  }
  init_rmsnorm(store, "qc.ln_f", cfg.d);
}

Tensor query_compress(Tape& tape, const ParamStore& store, const QueryCompressorConfig& cfg,
                      Tensor h) {
  int64_t T = h.shape()[0];
  if (T < 1) throw std::invalid_argument("query_compress: need at least one input frame");
  int64_t M = compressed_len(T, cfg.interleave);
  if (M > cfg.max_queries) {
    throw std::invalid_argument("query_compress: sequence needs " + std::to_string(M) +
                                " queries, configured maximum is " +
                                std::to_string(cfg.max_queries));
  }
  Tensor q = tape.slice(store.tensor(tape, "qc.queries"), 0, 0, M);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    q = cross_attention_block(tape, store, "qc.blk" + std::to_string(i), q, h, cfg.n_heads);
  }
  return rmsnorm(tape, store, "qc.ln_f", q);
}

}  // namespace aural
