#pragma once

#include <string>
#include <vector>

#include "aural/model.hpp"

namespace aural {

// G sampled outputs for one query with rewards, per-token log-probs frozen at
// sampling time, and group-normalized advantages.
struct RolloutGroup {
  std::string query_id;
  std::vector<std::vector<int32_t>> outputs;     // token sequences
  std::vector<double> rewards;
  std::vector<std::vector<double>> old_logp;     // [output][token]
  std::vector<std::vector<double>> new_logp;     // [output][token]
  std::vector<double> advantages;                // constant across an output's tokens
  bool truncated = false;
};

// (r_i - mean) / population std; all zeros when the std is zero (or G == 1).
std::vector<double> group_advantages(const std::vector<double>& rewards);

// Clipped surrogate: per token min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)
// with ratio = exp(new - old); token-mean per output, then mean over outputs.
// This is the maximized quantity; training negates it.
double grpo_objective(const RolloutGroup& group, double epsilon);

// d(surrogate)/d(new_logp) per token, including the same averaging. Zero on
// tokens where the clipped branch is active (the one-sided cutoff).
std::vector<std::vector<double>> grpo_grad_coefficients(const RolloutGroup& group,
                                                        double epsilon);

// k3-style KL estimate to the reference policy: mean of exp(d) - d - 1 with
// d = ref_logp - new_logp, and its per-token d/d(new_logp) coefficients.
double kl_value(const std::vector<std::vector<double>>& ref_logp,
                const std::vector<std::vector<double>>& new_logp);
std::vector<std::vector<double>> kl_grad_coefficients(
    const std::vector<std::vector<double>>& ref_logp,
    const std::vector<std::vector<double>>& new_logp);

// Rule-based verifiable rewards.
double reward_exact_match(const std::vector<int32_t>& target, const std::vector<int32_t>& output);
// 1 - normalized Levenshtein distance, in [0, 1].
double reward_edit_distance(const std::vector<int32_t>& target,
                            const std::vector<int32_t>& output);
double reward_label_accuracy(int32_t target, int32_t predicted);

// Synthetic verifiable task: the query presents text tokens between BOS and
// SEP; a perfect policy echoes them and stops with EOS.
struct EchoTask {
  std::vector<int32_t> prompt_tokens;  // global text ids
  TokenGrid query;                     // packed prompt: BOS tokens SEP
};
EchoTask make_echo_task(const Vocabulary& vocab, int n_tokens, Rng& rng);

// Sample G completions of the query and score them with the edit-distance
// reward against the echo target. Records per-token log-probs at sampling
// time (the "old" policy).
RolloutGroup rollout(const BackboneConfig& cfg, const ParamStore& store, const EchoTask& task,
                     int g, double temperature, int64_t cap, uint64_t seed);

// Recompute per-token log-probs of the recorded outputs under the current
// parameters (fills group.new_logp) and build a tape scalar of the form
// sum(coeff * logp) whose gradient equals d(-surrogate + kl_coeff*KL)/dθ at
// the current point. The surrogate and KL values themselves are computed in
// closed form. The reference policy for the KL term is the rollout policy.
struct GrpoStepOut {
  Tensor loss_for_grad;
  double surrogate = 0.0;
  double kl = 0.0;
  double mean_reward = 0.0;
};
GrpoStepOut grpo_step_objective(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                                const TokenGrid& query, RolloutGroup& group, double epsilon,
                                double kl_coeff);

}  // namespace aural
