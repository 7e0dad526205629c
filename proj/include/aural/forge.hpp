#pragma once

#include <string>
#include <vector>

#include "aural/corpus.hpp"
#include "aural/featbank.hpp"
#include "aural/grid.hpp"
#include "aural/quant.hpp"
#include "aural/rng.hpp"

namespace aural {

// Feature triple for one utterance at the reconstruction rate.
struct FeatureTriple {
  Array h_ph;
  Array h_mu;
  Array h_env;
};

// Reconstruction-branch tokenizer used by the constructors that operate in
// feature space (mixtures, attribute variants). Codebooks are seeded random
// with index 0 pinned to zero.
struct ForgeCodec {
  SyntheticFeatureBank bank;
  Codebook book_ph;
  Codebook book_mu;
  std::vector<Codebook> books_env;
  VocabConfig vocab_cfg;

  FeatureTriple features_of(uint64_t utterance_seed, double duration_s) const;
  Item tokenize_recon(const FeatureTriple& f) const;
};
ForgeCodec make_forge_codec(uint64_t seed, VocabConfig vocab);

// Elementwise feature-space sum (the desk-scale stand-in for waveform
// mixing); throws on misaligned lengths.
FeatureTriple mixture_of(const FeatureTriple& a, const FeatureTriple& b);

struct AttributeTransform {
  double rate = 1.0;    // playback-speed factor; frame count divides by it
  double scale = 1.0;   // per-element gain
  double offset = 0.0;  // per-element shift
};
FeatureTriple transform_features(const FeatureTriple& f, const AttributeTransform& t);

struct Segment {
  Item item;
  std::string provenance;
};

struct AuditorySentence {
  std::vector<Segment> segments;
  int64_t total_token_len = 0;  // packed grid length
  int strategy = 0;             // 1..5
  bool truncated = false;
};

std::vector<Item> sentence_items(const AuditorySentence& s);
int64_t packed_len(const std::vector<Item>& items, const Vocabulary& vocab);
Record sentence_to_record(const AuditorySentence& s, const Vocabulary& vocab,
                          const std::string& id);

// Strategy 1: split one long audio item into 2..8 contiguous segments whose
// concatenation reproduces (a prefix of) the original. The fitting prefix is
// chosen first, so the result always packs within ctx_budget; dropping
// trailing content sets the truncation flag.
AuditorySentence make_segmented(const Item& item, int64_t ctx_budget, const Vocabulary& vocab,
                                Rng& rng);

// Strategies 2 and 3: alternating (audio, text) pairs in one fixed order for
// the whole sentence. Trailing pairs that do not fit the budget are dropped
// whole; at least one pair must remain.
AuditorySentence make_interleaved(const std::vector<std::pair<Item, Item>>& pairs,
                                  bool audio_first, int strategy_tag, int64_t ctx_budget,
                                  const Vocabulary& vocab);

// Strategy 4: mixture-clean triples {a,b,c} with c mixed in feature space,
// each triple emitted in one of the orders (a,b,c), (c,a,b), (c,b,a); chains
// concatenate n_chain independent triples.
AuditorySentence make_mixture_triples(const ForgeCodec& codec, double duration_s, int n_chain,
                                      int64_t ctx_budget, Rng& rng);

// Strategy 5: one shared reasoning stream plus n_variants reconstruction
// segments produced by attribute transforms of the same base features.
AuditorySentence make_attribute_variants(const ForgeCodec& codec, uint64_t base_seed,
                                         double duration_s, int n_variants,
                                         const std::vector<AttributeTransform>& transforms,
                                         int64_t ctx_budget, Rng& rng);

// Deterministic reasoning item for a seed: the stream-0 symbol drives every
// stream of a frame. Shared verbatim by all attribute variants.
Item seeded_reason_item(const Vocabulary& vocab, uint64_t seed, int64_t n_frames);

// Planted-dependency corpus: records of [text style prefix][reasoning
// frames][reconstruction frames][EOS], where each reconstruction group's
// driving symbol is a per-style planted function of its parent reasoning
// frame's symbol with probability dependency_strength (uniform noise
// otherwise). All randomness derives from the seed.
struct SyntheticCorpusSpec {
  uint64_t seed = 1;
  int64_t n_records = 64;
  double min_duration_s = 1.2;
  double max_duration_s = 3.2;  // drawn on a 0.4 s grid for integral budgets
  double dependency_strength = 0.9;
  int32_t n_styles = 4;
  int64_t alphabet = 0;  // 0: use the full book size
  VocabConfig vocab;
};
std::vector<Record> synth_corpus(const SyntheticCorpusSpec& spec);

// Symbol view of one record for brute-force oracles: style x plus aligned
// (reasoning parent symbol, reconstruction symbol) pairs per recon frame.
struct SymbolView {
  int64_t style = 0;
  std::vector<int64_t> reason_symbols;  // per reasoning frame
  std::vector<int64_t> recon_symbols;   // per reconstruction frame
  std::vector<int64_t> parent;          // recon frame -> reasoning frame
};
SymbolView symbol_view(const Record& rec, const Vocabulary& vocab);

}  // namespace aural
