#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "aural/corpus.hpp"
#include "aural/loss.hpp"
#include "aural/model.hpp"
#include "aural/optim.hpp"

namespace aural {

// One stage of the four-stage recipe at desk scale. Trainable groups follow
// the stage number unless explicitly overridden:
//   1: understand + distill   2: generate + local   3/4: everything.
struct StageSpec {
  int stage = 3;
  int64_t steps = 200;
  double lr = 2e-4;
  int64_t warmup = 20;
  int64_t ctx = 1024;  // data-side packing budget (also capped by the model)
  double lambda_text = 1.6;
  double lambda_audio = 1.0;
  double lambda_rec = 1.0;
  double drop_reason_p = 0.0;  // train-time omission of reasoning items
  uint64_t seed = 1;
  std::set<std::string> trainable;  // derived from `stage` when empty

  std::set<std::string> trainable_groups() const;
};

// Scaled-down defaults per stage: steps 200/200/500/300, lr 2e-4 except 1e-4
// in stage 4, context 1024/1024/1024/2048.
StageSpec make_stage_spec(int stage);

struct StepMetrics {
  int64_t step = 0;
  double l_text = 0.0;
  double l_audio = 0.0;
  double l_total = 0.0;
  std::array<double, 8> stream_nll{};
  double tokens_per_sec = 0.0;
};

struct StageResult {
  std::vector<StepMetrics> history;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

// Throws (naming the offending groups) when the store's parameters do not
// match the configuration.
void validate_state(const BackboneConfig& cfg, const ParamStore& store);

// Deterministic packing of records into rows of at most the budget, whole
// records only, multiple documents per row with boundary masking.
std::vector<TokenGrid> pack_batches(const std::vector<Record>& records,
                                    const Vocabulary& vocab, int64_t budget, uint64_t seed,
                                    double drop_reason_p);

// Synthetic stand-in for frozen SSL features: per audio position a vector
// derived from the frame's stream-0 token, so the auxiliary decoder has a
// learnable target.
Array distill_targets(const TokenGrid& grid, const std::vector<int64_t>& audio_positions,
                      int64_t d, uint64_t seed);

StageResult run_stage(const StageSpec& spec, const BackboneConfig& cfg, ParamStore& store,
                      const std::vector<Record>& corpus, const std::string& metrics_csv = "");

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows);

}  // namespace aural
