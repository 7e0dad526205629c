#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aural {

// Control symbols. AUDIO_BEGIN/AUDIO_END bracket a run of audio items;
// REASON_BEGIN / RECON_BEGIN announce the frame kind that follows; SEP
// separates segments inside long multi-segment sequences.
enum Special : int32_t {
  PAD = 0,
  BOS = 1,
  EOS = 2,
  SEP = 3,
  AUDIO_BEGIN = 4,
  REASON_BEGIN = 5,
  RECON_BEGIN = 6,
  AUDIO_END = 7,
};

constexpr int32_t kNumSpecials = 8;

enum class TokenKind { special, text, reason, recon };

struct TokenInfo {
  TokenKind kind;
  int book;       // 0-based codebook for audio kinds, -1 otherwise
  int32_t index;  // offset within its range
};

struct VocabConfig {
  int32_t n_text = 64;
  int32_t n_reason_per_book = 64;
  int32_t n_recon_per_book = 64;
  int n_books = 8;
};

// Contiguous, disjoint id layout: [specials | text | reasoning books 1..K |
// reconstruction books 1..K].
class Vocabulary {
 public:
  explicit Vocabulary(VocabConfig cfg);

  int32_t size() const { return total_; }
  int n_books() const { return cfg_.n_books; }
  int32_t n_text() const { return cfg_.n_text; }
  int32_t n_reason_per_book() const { return cfg_.n_reason_per_book; }
  int32_t n_recon_per_book() const { return cfg_.n_recon_per_book; }

  int32_t text_begin() const { return kNumSpecials; }
  int32_t text_end() const { return kNumSpecials + cfg_.n_text; }
  int32_t reason_begin(int book) const;
  int32_t reason_end(int book) const { return reason_begin(book) + cfg_.n_reason_per_book; }
  int32_t recon_begin(int book) const;
  int32_t recon_end(int book) const { return recon_begin(book) + cfg_.n_recon_per_book; }

  int32_t encode(TokenKind kind, int book, int32_t index) const;
  TokenInfo decode(int32_t id) const;

  bool is_text(int32_t id) const { return id >= text_begin() && id < text_end(); }
  bool is_special(int32_t id) const { return id >= 0 && id < kNumSpecials; }

 private:
  VocabConfig cfg_;
  int32_t total_;
};

// Frame counts for a duration: reasoning at 5 Hz, reconstruction at 12.5 Hz,
// round-half-even on an integer-millisecond grid so decimal durations land
// exactly on their tie points.
struct FrameBudget {
  int64_t n_reason;
  int64_t n_recon;
};
FrameBudget frame_budget(double duration_s);

}  // namespace aural
