#include "alertpred/bow.hpp"

#include <algorithm>
#include <unordered_set>

#include "alertpred/error.hpp"
#include "json_io.hpp"

namespace alertpred {
namespace {

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

void append_words(std::string_view text, std::vector<std::string>& out) {
  std::string word;
  for (char c : text) {
    if (is_token_separator(c)) {
      if (!word.empty()) out.push_back(std::move(word));
      word.clear();
    } else {
      word.push_back(ascii_lower(c));
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
}

void append_octets(const Ipv4& ip, std::vector<std::string>& out) {
  for (auto octet : ip.octets) out.push_back(std::to_string(octet));
}

}  // namespace

bool is_token_separator(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == '-';
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) throw Error("vocabulary token " + std::to_string(i) + " is empty");
    if (std::any_of(t.begin(), t.end(), is_token_separator)) {
      throw Error("vocabulary token '" + t + "' contains a separator");
    }
    if (!index_.emplace(t, i).second) throw Error("duplicate vocabulary token '" + t + "'");
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> tokenize_alert(const Alert& alert) {
  std::vector<std::string> tokens;
  tokens.reserve(16);
  append_octets(alert.src_ip, tokens);
  if (alert.src_port) tokens.push_back(std::to_string(*alert.src_port));
  append_octets(alert.dst_ip, tokens);
  if (alert.dst_port) tokens.push_back(std::to_string(*alert.dst_port));

  const auto& sig = alert.signature;
  if (!sig.empty() && std::all_of(sig.begin(), sig.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    tokens.push_back(sig);
  } else {
    append_words(sig, tokens);
  }
  append_words(alert.category, tokens);
  return tokens;
}

Vocabulary build_vocabulary(const AlertLog& log) {
  if (log.empty()) throw Error("cannot build a vocabulary from an empty alert log");
  std::vector<std::string> ordered;
  std::unordered_set<std::string> seen;
  for (const auto& alert : log) {
    for (auto& token : tokenize_alert(alert)) {
      if (seen.insert(token).second) ordered.push_back(std::move(token));
    }
  }
  return Vocabulary(std::move(ordered));
}

CountVector vectorize(const Alert& alert, const Vocabulary& vocab) {
  CountVector v;
  v.counts.assign(vocab.size(), 0);
  for (const auto& token : tokenize_alert(alert)) {
    if (auto idx = vocab.index_of(token)) {
      ++v.counts[*idx];
    } else {
      ++v.out_of_vocabulary;
    }
  }
  return v;
}

nlohmann::json to_json(const Vocabulary& vocab) { return {{"tokens", vocab.tokens()}}; }

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  try {
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad vocabulary document: ") + e.what());
  }
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  detail::write_json_file(path, to_json(vocab));
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  return vocabulary_from_json(detail::read_json_file(path));
}

}  // namespace alertpred
