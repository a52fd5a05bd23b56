#include "tea/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace tea {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto ch = static_cast<unsigned char>(text[i]);
    if (ch == '<') {
      const auto close = text.find('>', i);
      if (close != std::string::npos) {
        flush();
        std::string special = text.substr(i, close - i + 1);
        std::transform(special.begin(), special.end(), special.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(special));
        i = close;
        continue;
      }
    }
    if (std::isalnum(ch) != 0) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

TokenVocab::TokenVocab() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>", "<sep>"}) add(t);
}

void TokenVocab::add(const std::string& token) {
  if (index_.count(token) != 0) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

TokenVocab TokenVocab::build(const std::vector<VideoSample>& samples) {
  std::set<std::string> seen;
  auto take = [&](const std::string& text) {
    for (auto& tok : tokenize(text)) seen.insert(std::move(tok));
  };
  for (const auto& s : samples) {
    for (const auto& e : s.entities) take(e.text);
    take(s.question);
    for (const auto& a : s.answers) take(a);
  }
  TokenVocab v;
  for (const auto& tok : seen) v.add(tok);
  return v;
}

TokenVocab TokenVocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumReserved) throw std::invalid_argument("vocab: missing reserved tokens");
  TokenVocab v;
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens[i] != v.tokens_[i]) throw std::invalid_argument("vocab: reserved token mismatch");
  }
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

int TokenVocab::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> TokenVocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::vector<int> TokenVocab::encode_entity(const std::string& text) const {
  auto ids = encode(text);
  if (ids.empty()) ids.push_back(kUnk);
  return ids;
}

std::string TokenVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kNumReserved && id != kUnk) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

}  // namespace tea
