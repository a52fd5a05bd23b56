#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tea/entities.hpp"

namespace tea {

/// Lowercased word pieces: runs of [a-z0-9] and bracketed specials like "<unk>".
std::vector<std::string> tokenize(const std::string& text);

/// Bidirectional token <-> id map with stable reserved ids.
class TokenVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kNumReserved = 5;

  TokenVocab();

  /// Reserved tokens followed by every token of the samples in sorted order.
  static TokenVocab build(const std::vector<VideoSample>& samples);
  static TokenVocab from_tokens(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::string& text) const;
  /// Sub-token ids of an entity text, never empty (UNK for blank text).
  std::vector<int> encode_entity(const std::string& text) const;
  /// Joins tokens with single spaces, skipping reserved ids.
  std::string decode(const std::vector<int>& ids) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace tea
