#include "dto/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "dto/errors.hpp"

namespace dto {

namespace {

const std::vector<std::string>& specials() {
  static const std::vector<std::string> s = {"<pad>", "<unk>", "<bos>", "<eos>",
                                             std::string(Tokenizer::kSepText)};
  return s;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

bool attaches_left(const std::string& tok) {
  return tok.size() == 1 && std::string_view(".,!?;:)%").find(tok[0]) != std::string_view::npos;
}

}  // namespace

Tokenizer::Tokenizer() : Tokenizer(specials(), std::string("<unk>")) {}

Tokenizer::Tokenizer(std::vector<std::string> tokens, std::optional<std::string> unk)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i));
  }
  if (unk) {
    auto it = index_.find(*unk);
    if (it != index_.end()) unk_ = it->second;
  }
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, std::size_t max_size) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> stats;  // count, first
  std::size_t order = 0;
  for (const auto& t : texts) {
    for (auto& w : split(t)) {
      auto [it, fresh] = stats.try_emplace(w, 0, order);
      if (fresh) ++order;
      ++it->second.first;
    }
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(),
                                                                                 stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> tokens = specials();
  for (const auto& [w, _] : ranked) {
    if (tokens.size() >= max_size) break;
    if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
  }
  return Tokenizer(std::move(tokens), std::string("<unk>"));
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      const auto close = text.find('>', i);
      if (close != std::string_view::npos && close - i <= 8) {
        const auto cand = text.substr(i, close - i + 1);
        if (std::find(specials().begin(), specials().end(), cand) != specials().end()) {
          out.emplace_back(cand);
          i = close + 1;
          continue;
        }
      }
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::optional<int> Tokenizer::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Tokenizer::id(const std::string& token) const {
  if (auto f = find(token)) return *f;
  if (unk_) return *unk_;
  throw TokenizerUnknownSymbol("unknown symbol '" + token + "' and no unknown token");
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split(text)) ids.push_back(id(w));
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    const auto& tok = token(id);
    if (tok != "<unk>" &&
        std::find(specials().begin(), specials().end(), tok) != specials().end()) {
      continue;
    }
    if (!out.empty() && !attaches_left(tok)) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace dto
