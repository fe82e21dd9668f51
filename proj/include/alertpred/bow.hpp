#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "alertpred/alert.hpp"

namespace alertpred {

// Ordered set of unique word tokens. Immutable once built.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws Error on duplicate, empty or separator-containing tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  std::optional<std::size_t> index_of(std::string_view token) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// True for characters that split words: ASCII whitespace and '-'.
bool is_token_separator(char c) noexcept;

// Word tokens of one alert, in this order: four src octets, src port (if
// any), four dst octets, dst port (if any), signature words, category words.
// A purely numeric signature is one token; otherwise the signature is split
// like the category on whitespace and '-'. Words are ASCII-lowercased.
std::vector<std::string> tokenize_alert(const Alert& alert);

// Union of all alert tokens in first-appearance order. Throws on an empty
// log.
Vocabulary build_vocabulary(const AlertLog& log);

struct CountVector {
  std::vector<std::uint32_t> counts;
  // Tokens of the alert that are not in the vocabulary.
  std::size_t out_of_vocabulary = 0;
};

CountVector vectorize(const Alert& alert, const Vocabulary& vocab);

nlohmann::json to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace alertpred
