#include "aural/grid.hpp"

#include <stdexcept>
#include <string>

namespace aural {

TokenGrid TokenGrid::empty(int64_t T) {
  TokenGrid g;
  g.B = 1;
  g.T = T;
  g.tokens.assign(static_cast<size_t>(T) * S, PAD);
  g.stream_mask.assign(static_cast<size_t>(T) * S, 0);
  g.audio_mask.assign(static_cast<size_t>(T), 0);
  g.frame_kind.assign(static_cast<size_t>(T), FrameKind::pad);
  g.doc_id.assign(static_cast<size_t>(T), 0);
  return g;
}

void TokenGrid::append_position(FrameKind kind, const std::vector<int32_t>& stream_tokens) {
  if (B != 1) throw std::logic_error("append_position only supports single-row grids");
  if (static_cast<int>(stream_tokens.size()) != S) {
    throw std::invalid_argument("append_position: expected " + std::to_string(S) + " slots");
  }
  ++T;
  tokens.insert(tokens.end(), stream_tokens.begin(), stream_tokens.end());
  for (int s = 0; s < S; ++s) {
    bool valid = false;
    if (kind == FrameKind::text) valid = (s == S - 1);
    else if (kind == FrameKind::reason_frame || kind == FrameKind::recon_frame) valid = (s < S - 1);
    stream_mask.push_back(valid ? 1 : 0);
  }
  audio_mask.push_back(kind == FrameKind::reason_frame || kind == FrameKind::recon_frame ? 1 : 0);
  frame_kind.push_back(kind);
  doc_id.push_back(0);
}

namespace {

void check_text_id(int32_t id, const Vocabulary& vocab) {
  if (vocab.is_text(id)) return;
  if (vocab.is_special(id) && id != AUDIO_BEGIN && id != REASON_BEGIN && id != RECON_BEGIN &&
      id != AUDIO_END) {
    return;  // PAD/BOS/EOS/SEP may appear inside text spans
  }
  throw std::out_of_range("text slot id " + std::to_string(id) +
                          " outside the text/special range");
}

std::vector<int32_t> text_position(int32_t id) {
  std::vector<int32_t> slots(TokenGrid::S, PAD);
  slots[TokenGrid::S - 1] = id;
  return slots;
}

}  // namespace

TokenGrid pack_sequence(const std::vector<Item>& items, const Vocabulary& vocab) {
  const int K = vocab.n_books();
  TokenGrid g = TokenGrid::empty(0);
  bool in_audio_run = false;

  auto close_audio_run = [&]() {
    if (in_audio_run) {
      g.append_position(FrameKind::text, text_position(AUDIO_END));
      in_audio_run = false;
    }
  };

  for (const Item& item : items) {
    if (item.kind == Item::Kind::text) {
      close_audio_run();
      for (int32_t id : item.text_tokens) {
        check_text_id(id, vocab);
        g.append_position(FrameKind::text, text_position(id));
      }
      continue;
    }

    bool is_reason = item.kind == Item::Kind::reason;
    if (!in_audio_run) {
      g.append_position(FrameKind::text, text_position(AUDIO_BEGIN));
      in_audio_run = true;
    }
    g.append_position(FrameKind::text, text_position(is_reason ? REASON_BEGIN : RECON_BEGIN));
    for (const auto& frame : item.frames) {
      if (static_cast<int>(frame.size()) != K) {
        throw std::invalid_argument("audio frame must carry exactly " + std::to_string(K) +
                                    " tokens, got " + std::to_string(frame.size()));
      }
      std::vector<int32_t> slots(TokenGrid::S, PAD);
      for (int k = 0; k < K; ++k) {
        int32_t id = frame[k];
        int32_t lo = is_reason ? vocab.reason_begin(k) : vocab.recon_begin(k);
        int32_t hi = is_reason ? vocab.reason_end(k) : vocab.recon_end(k);
        if (id < lo || id >= hi) {
          throw std::out_of_range("id " + std::to_string(id) + " outside book " +
                                  std::to_string(k) + " range [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + ")");
        }
        slots[k] = id;
      }
      g.append_position(is_reason ? FrameKind::reason_frame : FrameKind::recon_frame, slots);
    }
  }
  close_audio_run();
  return g;
}

std::vector<Item> unpack_sequence(const TokenGrid& grid, const Vocabulary& vocab) {
  if (grid.B != 1) throw std::invalid_argument("unpack_sequence expects a single-row grid");
  std::vector<Item> items;
  Item* open_text = nullptr;
  Item* open_audio = nullptr;

  auto flush = [&]() {
    open_text = nullptr;
    open_audio = nullptr;
  };

  for (int64_t t = 0; t < grid.T; ++t) {
    FrameKind fk = grid.kind(0, t);
    if (fk == FrameKind::pad) {
      flush();
      continue;
    }
    if (fk == FrameKind::text) {
      int32_t id = grid.tok(0, t, TokenGrid::S - 1);
      if (id == AUDIO_BEGIN || id == AUDIO_END) {
        flush();
        continue;
      }
      if (id == REASON_BEGIN || id == RECON_BEGIN) {
        open_text = nullptr;
        items.push_back(Item::audio(
            id == REASON_BEGIN ? Item::Kind::reason : Item::Kind::recon, {}));
        open_audio = &items.back();
        continue;
      }
      if (!open_text) {
        items.push_back(Item::text({}));
        open_text = &items.back();
        open_audio = nullptr;
      }
      open_text->text_tokens.push_back(id);
      continue;
    }
    // Audio frame row.
    if (!open_audio) {
      throw std::runtime_error("audio frame at position " + std::to_string(t) +
                               " without a preceding frame-kind marker");
    }
    std::vector<int32_t> frame(vocab.n_books());
    for (int k = 0; k < vocab.n_books(); ++k) frame[k] = grid.tok(0, t, k);
    open_audio->frames.push_back(std::move(frame));
  }
  return items;
}

void validate_grid(const TokenGrid& grid, const Vocabulary& vocab) {
  const int K = vocab.n_books();
  for (int64_t b = 0; b < grid.B; ++b) {
    for (int64_t t = 0; t < grid.T; ++t) {
      FrameKind fk = grid.kind(b, t);
      int valid = 0;
      for (int s = 0; s < TokenGrid::S; ++s) valid += grid.stream_mask[grid.flat(b, t, s)];
      bool audio = grid.is_audio(b, t);
      auto fail = [&](const std::string& why) {
        throw std::runtime_error("grid invariant violated at (b=" + std::to_string(b) +
                                 ", t=" + std::to_string(t) + "): " + why);
      };
      if (fk == FrameKind::text) {
        if (valid != 1 || !grid.stream_mask[grid.flat(b, t, TokenGrid::S - 1)]) {
          fail("text position must have exactly the last stream valid");
        }
        if (audio) fail("text position flagged as audio");
        for (int s = 0; s < K; ++s) {
          if (grid.tok(b, t, s) != PAD) fail("audio slot of a text position must hold PAD");
        }
        int32_t id = grid.tok(b, t, TokenGrid::S - 1);
        if (!vocab.is_text(id) && !vocab.is_special(id)) {
          fail("text slot id outside the text/special range");
        }
      } else if (fk == FrameKind::reason_frame || fk == FrameKind::recon_frame) {
        if (valid != K) fail("audio position must have exactly the first K streams valid");
        if (!audio) fail("audio position not flagged in audio_mask");
        if (grid.tok(b, t, TokenGrid::S - 1) != PAD) fail("text slot of an audio position not PAD");
        for (int k = 0; k < K; ++k) {
          int32_t id = grid.tok(b, t, k);
          int32_t lo = fk == FrameKind::reason_frame ? vocab.reason_begin(k)
                                                     : vocab.recon_begin(k);
          int32_t hi = fk == FrameKind::reason_frame ? vocab.reason_end(k) : vocab.recon_end(k);
          if (id < lo || id >= hi) fail("audio token outside its book range");
        }
      } else {
        if (valid != 0 || audio) fail("pad position must have no valid streams");
        for (int s = 0; s < TokenGrid::S; ++s) {
          if (grid.tok(b, t, s) != PAD) fail("pad position must hold PAD in every slot");
        }
      }
    }
  }
}

TokenGrid concat_grids(const std::vector<TokenGrid>& grids) {
  TokenGrid out = TokenGrid::empty(0);
  int32_t doc_base = 0;
  for (const TokenGrid& g : grids) {
    if (g.B != 1) throw std::invalid_argument("concat_grids expects single-row grids");
    out.T += g.T;
    out.tokens.insert(out.tokens.end(), g.tokens.begin(), g.tokens.end());
    out.stream_mask.insert(out.stream_mask.end(), g.stream_mask.begin(), g.stream_mask.end());
    out.audio_mask.insert(out.audio_mask.end(), g.audio_mask.begin(), g.audio_mask.end());
    out.frame_kind.insert(out.frame_kind.end(), g.frame_kind.begin(), g.frame_kind.end());
    int32_t max_doc = 0;
    for (int64_t t = 0; t < g.T; ++t) {
      out.doc_id.push_back(doc_base + g.doc_id[t]);
      max_doc = std::max(max_doc, g.doc_id[t]);
    }
    doc_base += max_doc + 1;
  }
  return out;
}

Tensor fuse_embeddings(Tape& tape, const TokenGrid& grid, const std::vector<Tensor>& tables,
                       int64_t b) {
  if (static_cast<int>(tables.size()) != TokenGrid::S) {
    throw std::invalid_argument("fuse_embeddings: expected one table per stream");
  }
  int64_t d = tables[0].shape()[1];
  for (const Tensor& t : tables) {
    if (t.shape()[1] != d) throw std::invalid_argument("fuse_embeddings: tables disagree on d");
  }
  Tensor fused{};
  for (int s = 0; s < TokenGrid::S; ++s) {
    std::vector<int64_t> ids(grid.T);
    Array mask = Array::zeros({grid.T, 1});
    for (int64_t t = 0; t < grid.T; ++t) {
      ids[t] = grid.tok(b, t, s);
      mask.data[t] = grid.stream_mask[grid.flat(b, t, s)] ? 1.0 : 0.0;
    }
    Tensor emb = tape.embedding(tables[s], std::move(ids));
    Tensor contrib = tape.mul(emb, tape.constant(std::move(mask)));
    fused = s == 0 ? contrib : tape.add(fused, contrib);
  }
  return fused;
}

}  // namespace aural
