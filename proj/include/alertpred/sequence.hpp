#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace alertpred {

using Symbol = std::uint32_t;

// A sequence of discrete observation symbols drawn from [0, n_symbols).
// Cluster-id sequences use n_symbols = k; category sequences use the codec
// size.
struct SymbolSequence {
  std::size_t n_symbols = 0;
  std::vector<Symbol> symbols;

  std::size_t size() const noexcept { return symbols.size(); }
  bool empty() const noexcept { return symbols.empty(); }
  std::span<const Symbol> view() const noexcept { return symbols; }

  // Throws alertpred::Error when a symbol is >= n_symbols.
  void validate() const;

  bool operator==(const SymbolSequence&) const = default;
};

nlohmann::json to_json(const SymbolSequence& seq);
SymbolSequence sequence_from_json(const nlohmann::json& j);

void save_sequence(const std::filesystem::path& path, const SymbolSequence& seq);
SymbolSequence load_sequence(const std::filesystem::path& path);

}  // namespace alertpred
