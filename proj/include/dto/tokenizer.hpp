#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dto {

// Word-level vocabulary shared by the generator and the scorer.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr std::string_view kSepText = "<sep>";

  Tokenizer();
  // Tokens are used verbatim; no specials are added. `unk` names the unknown
  // token if there is one.
  Tokenizer(std::vector<std::string> tokens, std::optional<std::string> unk);

  // Specials first, then corpus words by descending frequency (ties by first
  // appearance), up to `max_size` entries in total.
  static Tokenizer build(const std::vector<std::string>& texts, std::size_t max_size = 1000);

  // Splits on whitespace; runs of letters/digits/apostrophes form one token,
  // every other visible character is a token on its own. Special tokens such
  // as "<sep>" survive as single tokens.
  static std::vector<std::string> split(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  // Specials other than <unk> are dropped; punctuation attaches to the left.
  std::string decode(const std::vector<int>& ids) const;

  int id(const std::string& token) const;  // unknown id, or throws without one
  std::optional<int> find(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> unk_id() const { return unk_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Tokenizer& o) const { return tokens_ == o.tokens_ && unk_ == o.unk_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::optional<int> unk_;
};

}  // namespace dto
