#pragma once

#include <map>
#include <string>

#include "aural/corpus.hpp"
#include "aural/featbank.hpp"
#include "aural/film.hpp"
#include "aural/quant.hpp"

namespace aural {

// Desk-scale tokenizer pairing a reasoning branch (query compression at an
// interleave of 5 followed by 8-level RVQ) with a reconstruction branch
// (1:1:6 group-wise quantization at 12.5 Hz). Reasoning context modulates
// the environment features through FiLM (identity at init).
struct CodecConfig {
  uint64_t seed = 17;
  VocabConfig vocab;
  FeatureBankConfig bank;
  QueryCompressorConfig qc;  // qc.d is forced to the reasoning feature width
  FilmConfig film;
};

struct ReasoningCodecState {
  CodecConfig cfg;
  SyntheticFeatureBank bank;
  ParamStore params;                  // qc.* and film.*
  std::vector<Codebook> reason_books; // 8 levels over query states
  Codebook book_ph;
  Codebook book_mu;
  std::vector<Codebook> env_books;    // 6 levels

  // Reasoning + reconstruction items for one synthetic utterance.
  Record tokenize(uint64_t utterance_seed, double duration_s, const std::string& id) const;

  // Flat array view (codebooks included) for the common checkpoint format.
  std::map<std::string, Array> state_arrays() const;
};

ReasoningCodecState make_codec(CodecConfig cfg);

}  // namespace aural
