// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "molgen/error.hpp"

namespace molgen {

inline constexpr int kMaxSequenceLength = 80;

// Token alphabet of the SMILES subset handled here: the uncharged,
// stereochemistry-free organic set (C, N, O, S, F, Cl, Br, H) with aromatic
// lowercase forms, explicit bonds, branches, and ring digits 1-6.
//
// Two vocabularies index the same surface tokens. The decoder one carries 28
// entries including <sos>/<eos>; the encoder one carries the 26 others.
class Vocabulary {
 public:
  static const Vocabulary& decoder() {
    static const Vocabulary v({
        "<unknown>", "<sos>", "<eos>", "<pad>",
        "C", "c", "O", "o", "N", "n", "F", "S", "s", "Cl", "Br", "[nH]", "[H]",
        "-", "=", "#", "(", ")", "1", "2", "3", "4", "5", "6",
    });
    return v;
  }

  static const Vocabulary& encoder() {
    static const Vocabulary v({
        "<unknown>", "<pad>",
        "C", "c", "O", "o", "N", "n", "F", "S", "s", "Cl", "Br", "[nH]", "[H]",
        "-", "=", "#", "(", ")", "1", "2", "3", "4", "5", "6",
    });
    return v;
  }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) index_[tokens_[i]] = i;
    unknown_id_ = lookup("<unknown>");
    pad_id_ = lookup("<pad>");
    sos_id_ = find("<sos>");
    eos_id_ = find("<eos>");
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int unknown_id() const { return unknown_id_; }
  int pad_id() const { return pad_id_; }
  int sos_id() const { return sos_id_; }  // -1 when absent
  int eos_id() const { return eos_id_; }  // -1 when absent

  bool is_special(int id) const {
    return id == unknown_id_ || id == pad_id_ || id == sos_id_ || id == eos_id_;
  }

  int find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
  }

  int lookup(std::string_view token) const {
    const int id = find(token);
    if (id < 0) throw Error(ErrorCode::UnknownToken, "no such token: " + std::string(token));
    return id;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int unknown_id_ = -1;
  int pad_id_ = -1;
  int sos_id_ = -1;
  int eos_id_ = -1;
};

struct TokenSeq {
  std::vector<int> ids;
  // Count of non-pad tokens; padding may occupy only trailing positions.
  int length = 0;
};

// Surface tokens ordered for greedy longest-match: multi-character entries
// first so "Cl" wins over "C" and "[nH]" is consumed whole.
inline const std::vector<std::string>& surface_tokens() {
  static const std::vector<std::string> t = {
      "[nH]", "[H]", "Cl", "Br",
      "C", "c", "O", "o", "N", "n", "F", "S", "s",
      "-", "=", "#", "(", ")", "1", "2", "3", "4", "5", "6",
  };
  return t;
}

inline std::vector<std::string> tokenize_text(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::UnknownToken, "empty string at position 0");
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::string* matched = nullptr;
    for (const auto& tok : surface_tokens()) {
      if (text.compare(pos, tok.size(), tok) == 0) {
        matched = &tok;
        break;
      }
    }
    if (matched == nullptr) {
      throw Error(ErrorCode::UnknownToken,
                  "character '" + std::string(1, text[pos]) + "' at position " + std::to_string(pos));
    }
    out.push_back(*matched);
    pos += matched->size();
  }
  return out;
}

inline TokenSeq tokenize(std::string_view text, const Vocabulary& vocab = Vocabulary::decoder()) {
  const auto tokens = tokenize_text(text);
  if (tokens.size() > kMaxSequenceLength) {
    throw Error(ErrorCode::SequenceTooLong,
                std::to_string(tokens.size()) + " tokens exceeds " + std::to_string(kMaxSequenceLength));
  }
  TokenSeq seq;
  seq.ids.reserve(tokens.size());
  for (const auto& tok : tokens) seq.ids.push_back(vocab.lookup(tok));
  seq.length = static_cast<int>(seq.ids.size());
  return seq;
}

// Concatenates token strings, skipping the special markers.
inline std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab = Vocabulary::decoder()) {
  std::string out;
  for (int id : seq.ids) {
    if (vocab.is_special(id)) continue;
    out += vocab.token(id);
  }
  return out;
}

}  // namespace molgen
