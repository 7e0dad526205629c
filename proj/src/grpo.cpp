#include "aural/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aural {

std::vector<double> group_advantages(const std::vector<double>& rewards) {
  size_t g = rewards.size();
  std::vector<double> adv(g, 0.0);
  if (g == 0) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population variance
  double std = std::sqrt(var);
  if (std == 0.0) return adv;  // degenerate group: no learning signal
  for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / std;
  return adv;
}

namespace {

void check_aligned(const RolloutGroup& group) {
  if (group.new_logp.size() != group.old_logp.size()) {
    throw std::invalid_argument("grpo: old/new log-prob output counts differ");
  }
  for (size_t i = 0; i < group.old_logp.size(); ++i) {
    if (group.new_logp[i].size() != group.old_logp[i].size()) {
      throw std::invalid_argument("grpo: old/new log-probs misaligned for output " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

double grpo_objective(const RolloutGroup& group, double epsilon) {
  check_aligned(group);
  size_t g = group.old_logp.size();
  if (g == 0) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < g; ++i) {
    double adv = group.advantages[i];
    size_t n = group.old_logp[i].size();
    if (n == 0) continue;
    double sum = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double ratio = std::exp(group.new_logp[i][t] - group.old_logp[i][t]);
      double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
      sum += std::min(ratio * adv, clipped * adv);
    }
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(g);
}

std::vector<std::vector<double>> grpo_grad_coefficients(const RolloutGroup& group,
                                                        double epsilon) {
  check_aligned(group);
  size_t g = group.old_logp.size();
  std::vector<std::vector<double>> out(g);
  for (size_t i = 0; i < g; ++i) {
    double adv = group.advantages[i];
    size_t n = group.old_logp[i].size();
    out[i].assign(n, 0.0);
    for (size_t t = 0; t < n; ++t) {
      double ratio = std::exp(group.new_logp[i][t] - group.old_logp[i][t]);
      double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
      bool unclipped_selected = ratio * adv <= clipped * adv;
      if (unclipped_selected) {
        out[i][t] = ratio * adv / (static_cast<double>(n) * static_cast<double>(g));
      }
      // else: clipped branch active, d/d(new_logp) = 0 (one-sided cutoff)
    }
  }
  return out;
}

double kl_value(const std::vector<std::vector<double>>& ref_logp,
                const std::vector<std::vector<double>>& new_logp) {
  double total = 0.0;
  size_t g = ref_logp.size();
  if (g == 0) return 0.0;
  for (size_t i = 0; i < g; ++i) {
    size_t n = ref_logp[i].size();
    if (n == 0) continue;
    double sum = 0.0;
    for (size_t t = 0; t < n; ++t) {
      double d = ref_logp[i][t] - new_logp[i][t];
      sum += std::exp(d) - d - 1.0;
    }
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(g);
}

std::vector<std::vector<double>> kl_grad_coefficients(
    const std::vector<std::vector<double>>& ref_logp,
    const std::vector<std::vector<double>>& new_logp) {
  size_t g = ref_logp.size();
  std::vector<std::vector<double>> out(g);
  for (size_t i = 0; i < g; ++i) {
    size_t n = ref_logp[i].size();
    out[i].assign(n, 0.0);
    for (size_t t = 0; t < n; ++t) {
      double d = ref_logp[i][t] - new_logp[i][t];
      out[i][t] = (1.0 - std::exp(d)) / (static_cast<double>(n) * static_cast<double>(g));
    }
  }
  return out;
}

double reward_exact_match(const std::vector<int32_t>& target,
                          const std::vector<int32_t>& output) {
  return target == output ? 1.0 : 0.0;
}

double reward_edit_distance(const std::vector<int32_t>& target,
                            const std::vector<int32_t>& output) {
  size_t n = target.size(), m = output.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      size_t sub = prev[j - 1] + (target[i - 1] == output[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  double dist = static_cast<double>(prev[m]);
  return 1.0 - dist / static_cast<double>(std::max(n, m));
}

double reward_label_accuracy(int32_t target, int32_t predicted) {
  return target == predicted ? 1.0 : 0.0;
}

EchoTask make_echo_task(const Vocabulary& vocab, int n_tokens, Rng& rng) {
  EchoTask task;
  std::vector<int32_t> text = {BOS};
  for (int i = 0; i < n_tokens; ++i) {
    int32_t tok = vocab.encode(TokenKind::text, -1,
                               static_cast<int32_t>(rng.randint(0, vocab.n_text())));
    task.prompt_tokens.push_back(tok);
    text.push_back(tok);
  }
  text.push_back(SEP);
  task.query = pack_sequence({Item::text(text)}, vocab);
  return task;
}

namespace {

// Untempered model log-probs over the text head at the last position.
std::vector<double> next_text_logprobs(const BackboneConfig& cfg, const ParamStore& store,
                                       const TokenGrid& grid) {
  Tape tape(Dtype::f32, /*check_finite=*/false);
  BackboneOut fw = forward_backbone(tape, cfg, store, grid);
  Tensor last = tape.slice(fw.h_g, 0, grid.T - 1, grid.T);
  Tensor rows = rmsnorm(tape, store, "head.norm", last);
  Tensor logits = linear(tape, store, "head.text", rows);
  Array pad_mask = Array::zeros({1, cfg.text_head_width()});
  pad_mask.data[PAD] = -1e30;
  logits = tape.add(logits, tape.constant(std::move(pad_mask)));
  return tape.log_softmax(logits).value().data;
}

void push_text_token(TokenGrid& grid, int32_t id) {
  std::vector<int32_t> slots(TokenGrid::S, PAD);
  slots[TokenGrid::S - 1] = id;
  grid.append_position(FrameKind::text, slots);
}

}  // namespace

RolloutGroup rollout(const BackboneConfig& cfg, const ParamStore& store, const EchoTask& task,
                     int g, double temperature, int64_t cap, uint64_t seed) {
  if (g < 1) throw std::invalid_argument("rollout: need at least one sample");
  RolloutGroup group;
  group.query_id = "echo";
  std::vector<int32_t> target = task.prompt_tokens;
  target.push_back(EOS);

  Rng rng(seed);
  for (int i = 0; i < g; ++i) {
    TokenGrid grid = task.query;
    std::vector<int32_t> tokens;
    std::vector<double> logps;
    bool ended = false;
    // Text-only episode: sampled specials carry no scheduling semantics here.
    while (static_cast<int64_t>(tokens.size()) < cap && grid.T < cfg.t_max) {
      std::vector<double> lp = next_text_logprobs(cfg, store, grid);
      int64_t id = sample_from_logprobs(lp, temperature, 0, rng);
      tokens.push_back(static_cast<int32_t>(id));
      logps.push_back(lp[id]);
      push_text_token(grid, static_cast<int32_t>(id));
      if (id == EOS) {
        ended = true;
        break;
      }
    }
    if (!ended) group.truncated = true;
    group.outputs.push_back(tokens);
    group.old_logp.push_back(logps);
    group.rewards.push_back(reward_edit_distance(target, tokens));
  }
  group.advantages = group_advantages(group.rewards);
  group.new_logp = group.old_logp;  // identical until the next policy pass
  return group;
}

GrpoStepOut grpo_step_objective(Tape& tape, const BackboneConfig& cfg, const ParamStore& store,
                                const TokenGrid& query, RolloutGroup& group, double epsilon,
                                double kl_coeff) {
  GrpoStepOut out;
  size_t g = group.outputs.size();
  group.new_logp.assign(g, {});
  for (double r : group.rewards) out.mean_reward += r;
  if (g > 0) out.mean_reward /= static_cast<double>(g);

  // Replay each output against the query, collecting tape-side log-prob rows
  // at the output positions.
  struct PerOutput {
    Tensor logprobs;  // [n_tokens, V]
    std::vector<int64_t> targets;
  };
  std::vector<PerOutput> rows(g);
  for (size_t i = 0; i < g; ++i) {
    const auto& tokens = group.outputs[i];
    TokenGrid grid = query;
    for (int32_t id : tokens) push_text_token(grid, id);
    BackboneOut fw = forward_backbone(tape, cfg, store, grid);

    std::vector<int64_t> cond_pos(tokens.size());
    for (size_t t = 0; t < tokens.size(); ++t) {
      cond_pos[t] = query.T + static_cast<int64_t>(t) - 1;
    }
    Tensor gathered = tape.embedding(fw.h_g, cond_pos);
    gathered = rmsnorm(tape, store, "head.norm", gathered);
    Tensor logits = linear(tape, store, "head.text", gathered);
    Array pad_mask = Array::zeros({1, cfg.text_head_width()});
    pad_mask.data[PAD] = -1e30;
    logits = tape.add(logits, tape.constant(std::move(pad_mask)));
    rows[i].logprobs = tape.log_softmax(logits);
    rows[i].targets.assign(tokens.begin(), tokens.end());

    group.new_logp[i].resize(tokens.size());
    const Array& lp = rows[i].logprobs.value();
    for (size_t t = 0; t < tokens.size(); ++t) {
      group.new_logp[i][t] = lp.data[t * lp.shape[1] + tokens[t]];
    }
  }

  out.surrogate = grpo_objective(group, epsilon);
  out.kl = kl_value(group.old_logp, group.new_logp);
  auto surr_coeff = grpo_grad_coefficients(group, epsilon);
  auto kl_coeffs = kl_grad_coefficients(group.old_logp, group.new_logp);

  // Descent target L = -surrogate + kl_coeff * KL; build sum(w * logp) with
  // w = dL/d(logp) held constant.
  Tensor acc = tape.scalar_const(0.0);
  for (size_t i = 0; i < g; ++i) {
    int64_t n = static_cast<int64_t>(rows[i].targets.size());
    if (n == 0) continue;
    int64_t v = rows[i].logprobs.value().shape[1];
    Array w = Array::zeros({n, v});
    for (int64_t t = 0; t < n; ++t) {
      double coeff = -surr_coeff[i][t] + kl_coeff * kl_coeffs[i][t];
      w.data[t * v + rows[i].targets[t]] = coeff;
    }
    Tensor term = tape.mul_scalar(tape.mean(tape.mul(rows[i].logprobs, tape.constant(std::move(w)))),
                                  static_cast<double>(n * v));
    acc = tape.add(acc, term);
  }
  out.loss_for_grad = acc;
  return out;
}

}  // namespace aural
