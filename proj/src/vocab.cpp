#include "aural/vocab.hpp"

#include <cmath>
#include <stdexcept>

namespace aural {

Vocabulary::Vocabulary(VocabConfig cfg) : cfg_(cfg) {
  if (cfg_.n_text < 2 || cfg_.n_reason_per_book < 2 || cfg_.n_recon_per_book < 2) {
    throw std::invalid_argument("vocabulary sizes must be >= 2");
  }
  if (cfg_.n_books < 1) throw std::invalid_argument("n_books must be >= 1");
  total_ = kNumSpecials + cfg_.n_text +
           cfg_.n_books * (cfg_.n_reason_per_book + cfg_.n_recon_per_book);
}

int32_t Vocabulary::reason_begin(int book) const {
  if (book < 0 || book >= cfg_.n_books) throw std::out_of_range("reasoning book out of range");
  return text_end() + book * cfg_.n_reason_per_book;
}

int32_t Vocabulary::recon_begin(int book) const {
  if (book < 0 || book >= cfg_.n_books) throw std::out_of_range("reconstruction book out of range");
  return text_end() + cfg_.n_books * cfg_.n_reason_per_book + book * cfg_.n_recon_per_book;
}

int32_t Vocabulary::encode(TokenKind kind, int book, int32_t index) const {
  switch (kind) {
    case TokenKind::special:
      if (index < 0 || index >= kNumSpecials) throw std::out_of_range("special out of range");
      return index;
    case TokenKind::text:
      if (index < 0 || index >= cfg_.n_text) throw std::out_of_range("text index out of range");
      return text_begin() + index;
    case TokenKind::reason:
      if (index < 0 || index >= cfg_.n_reason_per_book) {
        throw std::out_of_range("reasoning index out of range");
      }
      return reason_begin(book) + index;
    case TokenKind::recon:
      if (index < 0 || index >= cfg_.n_recon_per_book) {
        throw std::out_of_range("reconstruction index out of range");
      }
      return recon_begin(book) + index;
  }
  throw std::logic_error("unreachable");
}

TokenInfo Vocabulary::decode(int32_t id) const {
  if (id < 0 || id >= total_) throw std::out_of_range("token id outside vocabulary");
  if (id < kNumSpecials) return {TokenKind::special, -1, id};
  if (id < text_end()) return {TokenKind::text, -1, id - text_begin()};
  int32_t r0 = text_end();
  int32_t r_span = cfg_.n_books * cfg_.n_reason_per_book;
  if (id < r0 + r_span) {
    int32_t off = id - r0;
    return {TokenKind::reason, static_cast<int>(off / cfg_.n_reason_per_book),
            off % cfg_.n_reason_per_book};
  }
  int32_t off = id - (r0 + r_span);
  return {TokenKind::recon, static_cast<int>(off / cfg_.n_recon_per_book),
          off % cfg_.n_recon_per_book};
}

namespace {

int64_t round_half_even(double x) {
  double fl = std::floor(x);
  double frac = x - fl;
  if (frac > 0.5) return static_cast<int64_t>(fl) + 1;
  if (frac < 0.5) return static_cast<int64_t>(fl);
  int64_t lo = static_cast<int64_t>(fl);
  return (lo % 2 == 0) ? lo : lo + 1;
}

}  // namespace

FrameBudget frame_budget(double duration_s) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  // Millisecond grid first: 5 Hz -> ms/200, 12.5 Hz -> ms/80. Both divisions
  // are correctly rounded, so true .5 ties are detected exactly.
  int64_t ms = std::llround(duration_s * 1000.0);
  double n_reason = static_cast<double>(ms) / 200.0;
  double n_recon = static_cast<double>(ms) / 80.0;
  return {round_half_even(n_reason), round_half_even(n_recon)};
}

}  // namespace aural
