#pragma once

#include <cstdint>
#include <vector>

#include "aural/tape.hpp"
#include "aural/vocab.hpp"

namespace aural {

enum class FrameKind : uint8_t { pad = 0, text = 1, reason_frame = 2, recon_frame = 3 };

// One ordered span of a packed sequence. Text payloads are global vocabulary
// ids (text range plus non-structural specials); audio payloads are global
// ids laid out frames x K, stream k holding a token of book k.
struct Item {
  enum class Kind { text, reason, recon };
  Kind kind = Kind::text;
  std::vector<int32_t> text_tokens;
  std::vector<std::vector<int32_t>> frames;

  static Item text(std::vector<int32_t> toks) {
    Item it;
    it.kind = Kind::text;
    it.text_tokens = std::move(toks);
    return it;
  }
  static Item audio(Kind k, std::vector<std::vector<int32_t>> frames) {
    Item it;
    it.kind = k;
    it.frames = std::move(frames);
    return it;
  }
};

// Packed multi-stream token grid: S = 9 slots per position, the first
// n_books audio and the last text. Exactly one modality is active at each
// valid position; invalid slots hold PAD.
struct TokenGrid {
  static constexpr int S = 9;
  int64_t B = 1;
  int64_t T = 0;
  std::vector<int32_t> tokens;       // B*T*S
  std::vector<uint8_t> stream_mask;  // B*T*S
  std::vector<uint8_t> audio_mask;   // B*T
  std::vector<FrameKind> frame_kind; // B*T
  std::vector<int32_t> doc_id;       // B*T, batching metadata

  int64_t flat(int64_t b, int64_t t, int s) const { return (b * T + t) * S + s; }
  int32_t tok(int64_t b, int64_t t, int s) const { return tokens[flat(b, t, s)]; }
  bool is_audio(int64_t b, int64_t t) const { return audio_mask[b * T + t] != 0; }
  FrameKind kind(int64_t b, int64_t t) const { return frame_kind[b * T + t]; }

  static TokenGrid empty(int64_t T);
  void append_position(FrameKind kind, const std::vector<int32_t>& stream_tokens);
};

// Serializes items into a grid row. Audio runs are bracketed with
// AUDIO_BEGIN/AUDIO_END; every reasoning item opens with REASON_BEGIN and
// every reconstruction item with RECON_BEGIN (marker positions are text
// slots). Throws on malformed frames or ids outside their slot's range.
TokenGrid pack_sequence(const std::vector<Item>& items, const Vocabulary& vocab);

// Exact inverse of pack_sequence for grids it produced.
std::vector<Item> unpack_sequence(const TokenGrid& grid, const Vocabulary& vocab);

// Throws if any grid invariant is violated (modality exclusivity, mask
// consistency, PAD filling, id ranges).
void validate_grid(const TokenGrid& grid, const Vocabulary& vocab);

// Concatenate grids along T as separate documents (doc ids shifted).
TokenGrid concat_grids(const std::vector<TokenGrid>& grids);

// Masked-summation embedding fusion for row b of the grid: every slot is
// looked up in its stream table, then multiplied by the validity mask, so PAD
// slots contribute exactly zero. Returns [T, d].
Tensor fuse_embeddings(Tape& tape, const TokenGrid& grid, const std::vector<Tensor>& tables,
                       int64_t b = 0);

}  // namespace aural
