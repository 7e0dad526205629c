#include "aural/evals.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "aural/forge.hpp"
#include "aural/loss.hpp"

#include <json.hpp>

namespace aural {

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["ppl"] = ppl;
  j["avg_ppl"] = avg_ppl;
  j["accuracy"] = accuracy;
  j["text_ppl"] = text_ppl;
  j["text_accuracy"] = text_accuracy;
  j["n_frames"] = n_frames;
  j["n_text_tokens"] = n_text_tokens;
  j["h_s_given_x"] = h_s_given_x;
  j["h_s_given_xr"] = h_s_given_xr;
  j["mi_s_r_given_x"] = mi_s_r_given_x;
  j["wall_clock_s"] = wall_clock_s;
  return j.dump(2);
}

namespace {

struct StreamStats {
  std::array<double, 8> nll_sum{};
  std::array<int64_t, 8> correct{};
  int64_t frames = 0;
  double text_nll_sum = 0.0;
  int64_t text_correct = 0;
  int64_t text_tokens = 0;
};

void accumulate_record(const BackboneConfig& cfg, const ParamStore& store, const Record& rec,
                       ConditionMode mode, StreamStats& stats) {
  Vocabulary vocab(cfg.vocab);
  std::vector<Item> items;
  for (const Item& item : rec.items) {
    if (mode == ConditionMode::without_reasoning && item.kind == Item::Kind::reason) continue;
    items.push_back(item);
  }
  TokenGrid grid = pack_sequence(items, vocab);
  if (grid.T == 0) return;
  if (grid.T > cfg.t_max) return;  // oversized eval records are skipped

  Tape tape(Dtype::f32, /*check_finite=*/false);
  BackboneOut fw = forward_backbone(tape, cfg, store, grid);
  LocalTeacher lt = local_teacher(tape, cfg, store, fw.h_g, grid);
  TextTeacher tt = text_teacher(tape, cfg, store, fw.h_g, grid);

  for (size_t i = 0; i < lt.frame_positions.size(); ++i) {
    if (lt.frame_kinds[i] != FrameKind::recon_frame) continue;
    ++stats.frames;
    for (int s = 0; s < 8; ++s) {
      const Array& lp = lt.stream_logprobs[s].value();
      int64_t v = lp.shape[1];
      int64_t target = lt.stream_targets[s][i];
      stats.nll_sum[s] -= lp.data[i * v + target];
      int64_t best = 0;
      for (int64_t j = 1; j < v; ++j) {
        if (lp.data[i * v + j] > lp.data[i * v + best]) best = j;  // ties: lowest id
      }
      if (best == target) ++stats.correct[s];
    }
  }
  if (!tt.targets.empty()) {
    const Array& lp = tt.logprobs.value();
    int64_t v = lp.shape[1];
    for (size_t i = 0; i < tt.targets.size(); ++i) {
      ++stats.text_tokens;
      stats.text_nll_sum -= lp.data[i * v + tt.targets[i]];
      int64_t best = 0;
      for (int64_t j = 1; j < v; ++j) {
        if (lp.data[i * v + j] > lp.data[i * v + best]) best = j;
      }
      if (best == tt.targets[i]) ++stats.text_correct;
    }
  }
}

EvalReport report_from(const StreamStats& stats) {
  EvalReport rep;
  rep.n_frames = stats.frames;
  rep.n_text_tokens = stats.text_tokens;
  double sum = 0.0;
  for (int s = 0; s < 8; ++s) {
    double mean_nll = stats.frames > 0 ? stats.nll_sum[s] / stats.frames : 0.0;
    rep.ppl[s] = std::exp(mean_nll);
    rep.accuracy[s] =
        stats.frames > 0 ? static_cast<double>(stats.correct[s]) / stats.frames : 0.0;
    sum += rep.ppl[s];
  }
  rep.avg_ppl = sum / 8.0;
  rep.text_ppl = stats.text_tokens > 0 ? std::exp(stats.text_nll_sum / stats.text_tokens) : 0.0;
  rep.text_accuracy =
      stats.text_tokens > 0 ? static_cast<double>(stats.text_correct) / stats.text_tokens : 0.0;
  return rep;
}

}  // namespace

EvalReport eval_ppl_per_codebook(const BackboneConfig& cfg, const ParamStore& store,
                                 const std::vector<Record>& corpus, ConditionMode mode) {
  if (corpus.empty()) throw std::invalid_argument("eval_ppl_per_codebook: empty corpus");
  auto t0 = std::chrono::steady_clock::now();
  StreamStats stats;
  for (const Record& rec : corpus) accumulate_record(cfg, store, rec, mode, stats);
  EvalReport rep = report_from(stats);
  rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

EvalReport eval_accuracy(const BackboneConfig& cfg, const ParamStore& store,
                         const std::vector<Record>& corpus) {
  return eval_ppl_per_codebook(cfg, store, corpus, ConditionMode::with_reasoning);
}

double JointCounts::total() const {
  double t = 0.0;
  for (double v : n) t += v;
  return t;
}

JointCounts tally_symbols(const std::vector<Record>& corpus, const Vocabulary& vocab) {
  JointCounts counts;
  int64_t max_x = 0, max_r = 0, max_s = 0;
  std::vector<SymbolView> views;
  views.reserve(corpus.size());
  for (const Record& rec : corpus) {
    SymbolView v = symbol_view(rec, vocab);
    for (int64_t r : v.reason_symbols) max_r = std::max(max_r, r + 1);
    for (int64_t s : v.recon_symbols) max_s = std::max(max_s, s + 1);
    max_x = std::max(max_x, v.style + 1);
    views.push_back(std::move(v));
  }
  counts.ax = max_x;
  counts.ar = max_r;
  counts.as_ = max_s;
  counts.n.assign(static_cast<size_t>(max_x * max_r * max_s), 0.0);
  for (const SymbolView& v : views) {
    for (size_t t = 0; t < v.recon_symbols.size(); ++t) {
      int64_t r = v.reason_symbols[v.parent[t]];
      counts.at(v.style, r, v.recon_symbols[t]) += 1.0;
    }
  }
  return counts;
}

EntropyGap entropy_gap(const JointCounts& counts) {
  double total = counts.total();
  if (total <= 0.0) throw std::invalid_argument("entropy_gap: empty tally");
  if (counts.ax > 8 || counts.ar > 8 || counts.as_ > 8) {
    throw std::invalid_argument("entropy_gap: alphabets must be at most 8");
  }
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };

  // Route 1: conditional entropies via joint entropies.
  double h_xrs = 0.0, h_x = 0.0, h_xr = 0.0, h_xs = 0.0;
  for (int64_t x = 0; x < counts.ax; ++x) {
    double px = 0.0;
    for (int64_t r = 0; r < counts.ar; ++r) {
      double pxr = 0.0;
      for (int64_t s = 0; s < counts.as_; ++s) {
        double p = counts.at(x, r, s) / total;
        h_xrs -= plogp(p);
        pxr += p;
      }
      h_xr -= plogp(pxr);
      px += pxr;
    }
    h_x -= plogp(px);
    for (int64_t s = 0; s < counts.as_; ++s) {
      double pxs = 0.0;
      for (int64_t r = 0; r < counts.ar; ++r) pxs += counts.at(x, r, s) / total;
      h_xs -= plogp(pxs);
    }
  }
  EntropyGap gap;
  gap.h_s_given_x = h_xs - h_x;
  gap.h_s_given_xr = h_xrs - h_xr;

  // Route 2: conditional mutual information computed directly.
  double mi = 0.0;
  for (int64_t x = 0; x < counts.ax; ++x) {
    double px = 0.0;
    for (int64_t r = 0; r < counts.ar; ++r) {
      for (int64_t s = 0; s < counts.as_; ++s) px += counts.at(x, r, s) / total;
    }
    if (px <= 0.0) continue;
    for (int64_t r = 0; r < counts.ar; ++r) {
      double pr_x = 0.0;
      for (int64_t s = 0; s < counts.as_; ++s) pr_x += counts.at(x, r, s) / total / px;
      for (int64_t s = 0; s < counts.as_; ++s) {
        double prs_x = counts.at(x, r, s) / total / px;
        if (prs_x <= 0.0) continue;
        double ps_x = 0.0;
        for (int64_t r2 = 0; r2 < counts.ar; ++r2) ps_x += counts.at(x, r2, s) / total / px;
        mi += px * prs_x * std::log(prs_x / (pr_x * ps_x));
      }
    }
  }
  gap.mi_s_r_given_x = mi;
  return gap;
}

}  // namespace aural
