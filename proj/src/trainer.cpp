#include "aural/trainer.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

namespace aural {

std::set<std::string> StageSpec::trainable_groups() const {
  if (!trainable.empty()) return trainable;
  switch (stage) {
    case 1:
      return {"understand", "distill"};
    case 2:
      return {"generate", "local"};
    case 3:
    case 4:
      return {"embed", "understand", "crossmodal", "generate", "local", "head"};
    default:
      throw std::invalid_argument("stage must be 1..4");
  }
}

StageSpec make_stage_spec(int stage) {
  StageSpec spec;
  spec.stage = stage;
  switch (stage) {
    case 1:
      spec.steps = 200;
      spec.lr = 2e-4;
      spec.ctx = 1024;
      break;
    case 2:
      spec.steps = 200;
      spec.lr = 2e-4;
      spec.ctx = 1024;
      break;
    case 3:
      spec.steps = 500;
      spec.lr = 2e-4;
      spec.ctx = 1024;
      break;
    case 4:
      spec.steps = 300;
      spec.lr = 1e-4;
      spec.ctx = 2048;
      break;
    default:
      throw std::invalid_argument("stage must be 1..4");
  }
  return spec;
}

void validate_state(const BackboneConfig& cfg, const ParamStore& store) {
  ParamStore reference = init_backbone(cfg, 0);
  std::set<std::string> bad;
  for (const auto& [name, arr] : reference.params) {
    auto it = store.params.find(name);
    if (it == store.params.end() || it->second.shape != arr.shape) {
      bad.insert(ParamStore::group_of(name));
    }
  }
  for (const auto& [name, arr] : store.params) {
    if (!reference.params.count(name)) bad.insert(ParamStore::group_of(name));
  }
  if (!bad.empty()) {
    std::string msg = "checkpoint incompatible with configuration; mismatched groups:";
    for (const auto& g : bad) msg += " " + g;
    throw std::runtime_error(msg);
  }
}

std::vector<TokenGrid> pack_batches(const std::vector<Record>& records,
                                    const Vocabulary& vocab, int64_t budget, uint64_t seed,
                                    double drop_reason_p) {
  Rng rng(seed);
  std::vector<size_t> order(records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.randint(0, static_cast<int64_t>(i))]);
  }

  std::vector<TokenGrid> rows;
  std::vector<TokenGrid> pending;
  int64_t pending_len = 0;
  auto flush = [&]() {
    if (!pending.empty()) {
      rows.push_back(concat_grids(pending));
      pending.clear();
      pending_len = 0;
    }
  };
  for (size_t idx : order) {
    std::vector<Item> items;
    for (const Item& item : records[idx].items) {
      if (item.kind == Item::Kind::reason && rng.uniform() < drop_reason_p) continue;
      items.push_back(item);
    }
    TokenGrid g = pack_sequence(items, vocab);
    if (g.T > budget) continue;  // oversized records are skipped whole
    if (pending_len + g.T > budget) flush();
    pending.push_back(std::move(g));
    pending_len += pending.back().T;
  }
  flush();
  return rows;
}

Array distill_targets(const TokenGrid& grid, const std::vector<int64_t>& audio_positions,
                      int64_t d, uint64_t seed) {
  Array out = Array::zeros({static_cast<int64_t>(audio_positions.size()), d});
  for (size_t i = 0; i < audio_positions.size(); ++i) {
    int32_t tok = grid.tok(0, audio_positions[i], 0);
    Rng rng(seed ^ (0x517ull * static_cast<uint64_t>(tok) + 13));
    for (int64_t j = 0; j < d; ++j) out.data[i * d + j] = rng.normal();
  }
  return out;
}

StageResult run_stage(const StageSpec& spec, const BackboneConfig& cfg, ParamStore& store,
                      const std::vector<Record>& corpus, const std::string& metrics_csv) {
  validate_state(cfg, store);
  store.trainable_groups = spec.trainable_groups();
  Vocabulary vocab(cfg.vocab);
  int64_t budget = std::min(spec.ctx, cfg.t_max);

  AdamWConfig ocfg;
  ocfg.lr = spec.lr;
  AdamW opt(ocfg);

  StageResult result;
  std::vector<TokenGrid> rows;
  size_t row_idx = 0;
  uint64_t epoch = 0;

  for (int64_t step = 0; step < spec.steps; ++step) {
    if (row_idx >= rows.size()) {
      rows = pack_batches(corpus, vocab, budget, spec.seed + 1000 * (++epoch), spec.drop_reason_p);
      row_idx = 0;
      if (rows.empty()) throw std::runtime_error("no data fits the packing budget");
    }
    const TokenGrid& grid = rows[row_idx++];

    auto t0 = std::chrono::steady_clock::now();
    Tape tape(Dtype::f32, /*check_finite=*/false);
    BackboneOut fw = forward_backbone(tape, cfg, store, grid);

    StepMetrics m;
    m.step = step;
    Tensor loss{};
    if (spec.stage == 1) {
      TextTeacher tt = text_teacher(tape, cfg, store, fw.h_g, grid);
      TextLoss lt = text_loss(tape, tt);
      std::vector<int64_t> audio_pos;
      for (int64_t t = 0; t < grid.T; ++t) {
        if (grid.is_audio(0, t)) audio_pos.push_back(t);
      }
      m.l_text = lt.value.value().data[0];
      if (audio_pos.empty()) {
        loss = lt.value;
      } else {
        Tensor decoded = distill_decode(tape, cfg, store, fw.h_u, audio_pos);
        Array target = distill_targets(grid, audio_pos, cfg.d_distill, spec.seed);
        loss = stage1_distill_loss(tape, lt.value, decoded, target, spec.lambda_rec);
      }
      m.l_total = loss.value().data[0];
    } else if (spec.stage == 2) {
      LocalTeacher lt = local_teacher(tape, cfg, store, fw.h_g, grid);
      AudioLoss la = audio_frame_loss(tape, lt, StreamWeights{});
      m.l_audio = la.value.value().data[0];
      m.stream_nll = la.stream_nll;
      loss = la.value;
      m.l_total = m.l_audio;
    } else {
      TextTeacher tt = text_teacher(tape, cfg, store, fw.h_g, grid);
      LocalTeacher lat = local_teacher(tape, cfg, store, fw.h_g, grid);
      TextLoss lt = text_loss(tape, tt);
      AudioLoss la = audio_frame_loss(tape, lat, StreamWeights{});
      loss = total_loss(tape, lt.value, la.value, spec.lambda_text, spec.lambda_audio);
      m.l_text = lt.value.value().data[0];
      m.l_audio = la.value.value().data[0];
      m.stream_nll = la.stream_nll;
      m.l_total = loss.value().data[0];
    }

    GradMap grads = tape.backward(loss);
    opt.step(store, grads, lr_schedule(step, spec.steps, spec.lr, spec.warmup));

    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    m.tokens_per_sec = secs > 0 ? static_cast<double>(grid.T) / secs : 0.0;
    if (step == 0) result.first_loss = m.l_total;
    result.last_loss = m.l_total;
    result.history.push_back(m);
  }

  if (!metrics_csv.empty()) write_metrics_csv(metrics_csv, result.history);
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open metrics file: " + path);
  os << "step,l_text,l_audio,l_total,nll_s1,nll_s2,nll_s3,nll_s4,nll_s5,nll_s6,nll_s7,nll_s8,"
        "tokens_per_sec\n";
  for (const StepMetrics& m : rows) {
    os << m.step << "," << m.l_text << "," << m.l_audio << "," << m.l_total;
    for (double v : m.stream_nll) os << "," << v;
    os << "," << m.tokens_per_sec << "\n";
  }
}

}  // namespace aural
