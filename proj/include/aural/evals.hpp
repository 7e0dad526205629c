#pragma once

#include <array>
#include <string>
#include <vector>

#include "aural/corpus.hpp"
#include "aural/model.hpp"

namespace aural {

struct EvalReport {
  std::array<double, 8> ppl{};       // reconstruction streams, exp(mean NLL)
  double avg_ppl = 0.0;
  std::array<double, 8> accuracy{};  // top-1 per reconstruction stream
  double text_ppl = 0.0;
  double text_accuracy = 0.0;
  int64_t n_frames = 0;
  int64_t n_text_tokens = 0;
  double h_s_given_x = 0.0;
  double h_s_given_xr = 0.0;
  double mi_s_r_given_x = 0.0;
  double wall_clock_s = 0.0;

  std::string to_json() const;
};

enum class ConditionMode { with_reasoning, without_reasoning };

// Teacher-forced per-codebook perplexity over reconstruction frames;
// with_reasoning keeps the records' reasoning prefixes, without_reasoning
// drops them before packing. Throws on an empty corpus.
EvalReport eval_ppl_per_codebook(const BackboneConfig& cfg, const ParamStore& store,
                                 const std::vector<Record>& corpus, ConditionMode mode);

// Teacher-forced top-1 accuracy per reconstruction stream (argmax, ties to
// the lowest id) plus text accuracy.
EvalReport eval_accuracy(const BackboneConfig& cfg, const ParamStore& store,
                         const std::vector<Record>& corpus);

// Dense empirical joint over (style, reasoning symbol, reconstruction
// symbol) with small alphabets.
struct JointCounts {
  int64_t ax = 0, ar = 0, as_ = 0;
  std::vector<double> n;  // ax*ar*as_ counts

  double& at(int64_t x, int64_t r, int64_t s) { return n[(x * ar + r) * as_ + s]; }
  double at(int64_t x, int64_t r, int64_t s) const { return n[(x * ar + r) * as_ + s]; }
  double total() const;
};

JointCounts tally_symbols(const std::vector<Record>& corpus, const Vocabulary& vocab);

// H(S|X), H(S|X,R) from joint entropies, and I(S;R|X) computed directly by
// an independent route. Natural log units. Throws on an empty tally or
// alphabets larger than 8.
struct EntropyGap {
  double h_s_given_x = 0.0;
  double h_s_given_xr = 0.0;
  double mi_s_r_given_x = 0.0;
};
EntropyGap entropy_gap(const JointCounts& counts);

}  // namespace aural
