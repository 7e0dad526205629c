#include "aural/forge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aural/film.hpp"

namespace aural {

ForgeCodec make_forge_codec(uint64_t seed, VocabConfig vocab) {
  FeatureBankConfig bank_cfg;
  bank_cfg.bank_seed = seed;
  ForgeCodec codec{SyntheticFeatureBank(bank_cfg), {}, {}, {}, vocab};
  Rng rng(seed ^ 0x5eedb00c);
  codec.book_ph = Codebook::make(vocab.n_recon_per_book, bank_cfg.d_ph, rng);
  codec.book_mu = Codebook::make(vocab.n_recon_per_book, bank_cfg.d_mu, rng);
  for (int i = 0; i < 6; ++i) {
    codec.books_env.push_back(Codebook::make(vocab.n_recon_per_book, bank_cfg.d_env, rng));
  }
  return codec;
}

FeatureTriple ForgeCodec::features_of(uint64_t utterance_seed, double duration_s) const {
  FeatureSet fs = bank.features(utterance_seed, duration_s);
  return {std::move(fs.h_ph), std::move(fs.h_mu), std::move(fs.h_env)};
}

Item ForgeCodec::tokenize_recon(const FeatureTriple& f) const {
  Vocabulary vocab(vocab_cfg);
  GroupwiseResult res = groupwise_quantize(f.h_ph, f.h_mu, f.h_env, book_ph, book_mu, books_env);
  int64_t n = f.h_ph.shape[0];
  std::vector<std::vector<int32_t>> frames(n, std::vector<int32_t>(vocab_cfg.n_books));
  for (int64_t t = 0; t < n; ++t) {
    for (int s = 0; s < vocab_cfg.n_books; ++s) {
      frames[t][s] = vocab.encode(TokenKind::recon, s, res.streams[s][t]);
    }
  }
  return Item::audio(Item::Kind::recon, std::move(frames));
}

FeatureTriple mixture_of(const FeatureTriple& a, const FeatureTriple& b) {
  if (a.h_ph.shape != b.h_ph.shape || a.h_mu.shape != b.h_mu.shape ||
      a.h_env.shape != b.h_env.shape) {
    throw std::invalid_argument("mixture_of: sources are not time-aligned");
  }
  FeatureTriple c = a;
  for (int64_t i = 0; i < c.h_ph.numel(); ++i) c.h_ph.data[i] += b.h_ph.data[i];
  for (int64_t i = 0; i < c.h_mu.numel(); ++i) c.h_mu.data[i] += b.h_mu.data[i];
  for (int64_t i = 0; i < c.h_env.numel(); ++i) c.h_env.data[i] += b.h_env.data[i];
  return c;
}

namespace {

Array resample_rows(const Array& x, double rate) {
  int64_t frames = x.shape[0], d = x.shape[1];
  int64_t out_frames = std::max<int64_t>(1, std::llround(static_cast<double>(frames) / rate));
  Array out = Array::zeros({out_frames, d});
  for (int64_t j = 0; j < out_frames; ++j) {
    int64_t src = std::min<int64_t>(frames - 1, std::llround(static_cast<double>(j) * rate));
    std::copy_n(x.data.data() + src * d, d, out.data.data() + j * d);
  }
  return out;
}

}  // namespace

FeatureTriple transform_features(const FeatureTriple& f, const AttributeTransform& t) {
  FeatureTriple out;
  out.h_ph = resample_rows(f.h_ph, t.rate);
  out.h_mu = resample_rows(f.h_mu, t.rate);
  out.h_env = resample_rows(f.h_env, t.rate);
  for (Array* a : {&out.h_ph, &out.h_mu, &out.h_env}) {
    for (double& v : a->data) v = v * t.scale + t.offset;
  }
  return out;
}

std::vector<Item> sentence_items(const AuditorySentence& s) {
  std::vector<Item> items;
  items.reserve(s.segments.size());
  for (const Segment& seg : s.segments) items.push_back(seg.item);
  return items;
}

int64_t packed_len(const std::vector<Item>& items, const Vocabulary& vocab) {
  return pack_sequence(items, vocab).T;
}

Record sentence_to_record(const AuditorySentence& s, const Vocabulary& vocab,
                          const std::string& id) {
  (void)vocab;
  Record rec;
  rec.id = id;
  std::string prov;
  for (const Segment& seg : s.segments) {
    rec.items.push_back(seg.item);
    if (!prov.empty()) prov += ";";
    prov += seg.provenance;
  }
  rec.meta_str["strategy"] = std::to_string(s.strategy);
  rec.meta_str["provenance"] = prov;
  rec.meta_num["total_token_len"] = static_cast<double>(s.total_token_len);
  rec.meta_num["truncated"] = s.truncated ? 1.0 : 0.0;
  return rec;
}

AuditorySentence make_segmented(const Item& item, int64_t ctx_budget, const Vocabulary& vocab,
                                Rng& rng) {
  if (item.kind == Item::Kind::text) {
    throw std::invalid_argument("make_segmented: expects a long audio item");
  }
  int64_t frames = static_cast<int64_t>(item.frames.size());
  if (frames < 2) throw std::invalid_argument("make_segmented: item too short to split");

  // Marker overhead: AUDIO_BEGIN + AUDIO_END + one kind marker per segment.
  int64_t max_frames = ctx_budget - 2 - 8;
  if (max_frames < 2) throw std::invalid_argument("make_segmented: budget too small");
  int64_t keep = std::min(frames, max_frames);

  AuditorySentence s;
  s.strategy = 1;
  s.truncated = keep < frames;

  int64_t n_seg = std::clamp<int64_t>(rng.randint(2, 9), 2, keep);
  // Distinct cut points inside [1, keep).
  std::vector<int64_t> cuts;
  while (static_cast<int64_t>(cuts.size()) < n_seg - 1) {
    int64_t c = rng.randint(1, keep);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  cuts.push_back(0);
  cuts.push_back(keep);
  std::sort(cuts.begin(), cuts.end());

  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    std::vector<std::vector<int32_t>> part(item.frames.begin() + cuts[i],
                                           item.frames.begin() + cuts[i + 1]);
    Segment seg;
    seg.item = Item::audio(item.kind, std::move(part));
    seg.provenance = "segmented:" + std::to_string(i);
    s.segments.push_back(std::move(seg));
  }
  s.total_token_len = packed_len(sentence_items(s), vocab);
  return s;
}

AuditorySentence make_interleaved(const std::vector<std::pair<Item, Item>>& pairs,
                                  bool audio_first, int strategy_tag, int64_t ctx_budget,
                                  const Vocabulary& vocab) {
  if (pairs.empty()) throw std::invalid_argument("make_interleaved: need at least one pair");
  AuditorySentence s;
  s.strategy = strategy_tag;
  for (size_t i = 0; i < pairs.size(); ++i) {
    AuditorySentence candidate = s;
    Segment a{pairs[i].first, "pair" + std::to_string(i) + ":audio"};
    Segment t{pairs[i].second, "pair" + std::to_string(i) + ":text"};
    if (audio_first) {
      candidate.segments.push_back(a);
      candidate.segments.push_back(t);
    } else {
      candidate.segments.push_back(t);
      candidate.segments.push_back(a);
    }
    int64_t len = packed_len(sentence_items(candidate), vocab);
    if (len > ctx_budget) {
      s.truncated = true;  // trailing pairs dropped whole
      break;
    }
    s = std::move(candidate);
  }
  if (s.segments.empty()) {
    throw std::invalid_argument("make_interleaved: budget too small for one pair");
  }
  s.total_token_len = packed_len(sentence_items(s), vocab);
  return s;
}

AuditorySentence make_mixture_triples(const ForgeCodec& codec, double duration_s, int n_chain,
                                      int64_t ctx_budget, Rng& rng) {
  if (n_chain < 1) throw std::invalid_argument("make_mixture_triples: n_chain must be >= 1");
  Vocabulary vocab(codec.vocab_cfg);
  AuditorySentence s;
  s.strategy = 4;
  for (int link = 0; link < n_chain; ++link) {
    FeatureTriple fa = codec.features_of(rng.next_u64(), duration_s);
    FeatureTriple fb = codec.features_of(rng.next_u64(), duration_s);
    FeatureTriple fc = mixture_of(fa, fb);
    Segment a{codec.tokenize_recon(fa), "triple" + std::to_string(link) + ":a"};
    Segment b{codec.tokenize_recon(fb), "triple" + std::to_string(link) + ":b"};
    Segment c{codec.tokenize_recon(fc), "triple" + std::to_string(link) + ":c"};
    AuditorySentence candidate = s;
    switch (rng.randint(0, 3)) {
      case 0:
        candidate.segments.push_back(a);
        candidate.segments.push_back(b);
        candidate.segments.push_back(c);
        break;
      case 1:
        candidate.segments.push_back(c);
        candidate.segments.push_back(a);
        candidate.segments.push_back(b);
        break;
      default:
        candidate.segments.push_back(c);
        candidate.segments.push_back(b);
        candidate.segments.push_back(a);
        break;
    }
    int64_t len = packed_len(sentence_items(candidate), vocab);
    if (len > ctx_budget) {
      s.truncated = true;
      break;
    }
    s = std::move(candidate);
  }
  if (s.segments.empty()) {
    throw std::invalid_argument("make_mixture_triples: budget too small for one triple");
  }
  s.total_token_len = packed_len(sentence_items(s), vocab);
  return s;
}

Item seeded_reason_item(const Vocabulary& vocab, uint64_t seed, int64_t n_frames) {
  Rng rng(seed ^ 0x5ea50ull);
  int64_t alphabet = vocab.n_reason_per_book();
  std::vector<std::vector<int32_t>> frames(n_frames, std::vector<int32_t>(vocab.n_books()));
  for (int64_t f = 0; f < n_frames; ++f) {
    int64_t driver = rng.randint(0, alphabet);
    for (int s = 0; s < vocab.n_books(); ++s) {
      frames[f][s] =
          vocab.encode(TokenKind::reason, s, static_cast<int32_t>((driver + 7 * s) % alphabet));
    }
  }
  return Item::audio(Item::Kind::reason, std::move(frames));
}

AuditorySentence make_attribute_variants(const ForgeCodec& codec, uint64_t base_seed,
                                         double duration_s, int n_variants,
                                         const std::vector<AttributeTransform>& transforms,
                                         int64_t ctx_budget, Rng& rng) {
  if (n_variants < 2) throw std::invalid_argument("make_attribute_variants: need >= 2 variants");
  if (static_cast<int>(transforms.size()) != n_variants) {
    throw std::invalid_argument("make_attribute_variants: one transform per variant");
  }
  (void)rng;
  Vocabulary vocab(codec.vocab_cfg);
  FrameBudget budget = frame_budget(duration_s);
  AuditorySentence s;
  s.strategy = 5;
  Segment reason{seeded_reason_item(vocab, base_seed, budget.n_reason), "variants:reason"};
  s.segments.push_back(std::move(reason));

  FeatureTriple base = codec.features_of(base_seed, duration_s);
  for (int v = 0; v < n_variants; ++v) {
    FeatureTriple f = transform_features(base, transforms[v]);
    Segment seg{codec.tokenize_recon(f), "variants:recon" + std::to_string(v)};
    s.segments.push_back(std::move(seg));
  }
  s.total_token_len = packed_len(sentence_items(s), vocab);
  if (s.total_token_len > ctx_budget) {
    // Drop trailing variants whole until the sentence fits (>= 2 kept).
    while (s.total_token_len > ctx_budget && s.segments.size() > 3) {
      s.segments.pop_back();
      s.truncated = true;
      s.total_token_len = packed_len(sentence_items(s), vocab);
    }
    if (s.total_token_len > ctx_budget) {
      throw std::invalid_argument("make_attribute_variants: budget too small");
    }
  }
  return s;
}

std::vector<Record> synth_corpus(const SyntheticCorpusSpec& spec) {
  Vocabulary vocab(spec.vocab);
  int64_t alphabet = spec.alphabet > 0
                         ? spec.alphabet
                         : std::min<int64_t>(spec.vocab.n_reason_per_book,
                                             spec.vocab.n_recon_per_book);
  if (alphabet > spec.vocab.n_reason_per_book || alphabet > spec.vocab.n_recon_per_book) {
    throw std::invalid_argument("synth_corpus: alphabet exceeds book size");
  }
  if (spec.dependency_strength < 0.0 || spec.dependency_strength > 1.0) {
    throw std::invalid_argument("synth_corpus: dependency strength must lie in [0,1]");
  }

  // Planted per-style permutations mapping reasoning symbols to
  // reconstruction symbols; fixed across the corpus so the mapping is
  // learnable.
  Rng table_rng(spec.seed ^ 0x9e11);
  std::vector<std::vector<int64_t>> g(spec.n_styles, std::vector<int64_t>(alphabet));
  for (auto& perm : g) {
    for (int64_t i = 0; i < alphabet; ++i) perm[i] = i;
    for (int64_t i = alphabet - 1; i > 0; --i) {
      std::swap(perm[i], perm[table_rng.randint(0, i + 1)]);
    }
  }

  // Duration grid of 0.4 s keeps both frame budgets integral.
  int64_t grid_lo = std::llround(spec.min_duration_s / 0.4);
  int64_t grid_hi = std::llround(spec.max_duration_s / 0.4);
  if (grid_lo < 1 || grid_hi < grid_lo) {
    throw std::invalid_argument("synth_corpus: bad duration range");
  }

  std::vector<Record> records;
  records.reserve(spec.n_records);
  for (int64_t r = 0; r < spec.n_records; ++r) {
    Rng rng = Rng(spec.seed).fork(static_cast<uint64_t>(r) + 1);
    int64_t style = rng.randint(0, spec.n_styles);
    double duration = 0.4 * static_cast<double>(rng.randint(grid_lo, grid_hi + 1));
    FrameBudget budget = frame_budget(duration);

    std::vector<int64_t> rho(budget.n_reason);
    for (auto& v : rho) v = rng.randint(0, alphabet);
    std::vector<int64_t> parent = film_upsample_ids(budget.n_reason, budget.n_recon);
    std::vector<int64_t> sigma(budget.n_recon);
    for (int64_t t = 0; t < budget.n_recon; ++t) {
      bool planted = rng.uniform() < spec.dependency_strength;
      sigma[t] = planted ? g[style][rho[parent[t]]] : rng.randint(0, alphabet);
    }

    std::vector<std::vector<int32_t>> reason_frames(budget.n_reason,
                                                    std::vector<int32_t>(spec.vocab.n_books));
    for (int64_t f = 0; f < budget.n_reason; ++f) {
      for (int s = 0; s < spec.vocab.n_books; ++s) {
        int64_t idx = (rho[f] + 7 * s) % alphabet;
        reason_frames[f][s] = vocab.encode(TokenKind::reason, s, static_cast<int32_t>(idx));
      }
    }
    std::vector<std::vector<int32_t>> recon_frames(budget.n_recon,
                                                   std::vector<int32_t>(spec.vocab.n_books));
    for (int64_t t = 0; t < budget.n_recon; ++t) {
      for (int s = 0; s < spec.vocab.n_books; ++s) {
        int64_t idx = (sigma[t] + 11 * s) % alphabet;
        recon_frames[t][s] = vocab.encode(TokenKind::recon, s, static_cast<int32_t>(idx));
      }
    }

    Record rec;
    rec.id = "synth-" + std::to_string(r);
    rec.items.push_back(Item::text(
        {BOS, vocab.encode(TokenKind::text, -1,
                           static_cast<int32_t>(style % spec.vocab.n_text))}));
    rec.items.push_back(Item::audio(Item::Kind::reason, std::move(reason_frames)));
    rec.items.push_back(Item::audio(Item::Kind::recon, std::move(recon_frames)));
    rec.items.push_back(Item::text({EOS}));
    rec.meta_num["style"] = static_cast<double>(style);
    rec.meta_num["duration_s"] = duration;
    rec.meta_num["strength"] = spec.dependency_strength;
    rec.meta_str["kind"] = "planted";
    records.push_back(std::move(rec));
  }
  return records;
}

SymbolView symbol_view(const Record& rec, const Vocabulary& vocab) {
  SymbolView view;
  bool have_style = false;
  for (const Item& item : rec.items) {
    if (item.kind == Item::Kind::text) {
      for (int32_t id : item.text_tokens) {
        if (vocab.is_text(id) && !have_style) {
          view.style = id - vocab.text_begin();
          have_style = true;
        }
      }
    } else if (item.kind == Item::Kind::reason) {
      for (const auto& frame : item.frames) {
        view.reason_symbols.push_back(frame[0] - vocab.reason_begin(0));
      }
    } else {
      for (const auto& frame : item.frames) {
        view.recon_symbols.push_back(frame[0] - vocab.recon_begin(0));
      }
    }
  }
  if (!view.reason_symbols.empty() && !view.recon_symbols.empty()) {
    view.parent = film_upsample_ids(static_cast<int64_t>(view.reason_symbols.size()),
                                    static_cast<int64_t>(view.recon_symbols.size()));
  }
  return view;
}

}  // namespace aural
