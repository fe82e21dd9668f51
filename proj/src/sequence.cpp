#include "alertpred/sequence.hpp"

#include "alertpred/error.hpp"
#include "json_io.hpp"

namespace alertpred {

void SymbolSequence::validate() const {
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] >= n_symbols) {
      throw Error("symbol " + std::to_string(symbols[i]) + " at position " + std::to_string(i) +
                  " is outside [0, " + std::to_string(n_symbols) + ")");
    }
  }
}

nlohmann::json to_json(const SymbolSequence& seq) {
  return {{"n_symbols", seq.n_symbols}, {"symbols", seq.symbols}};
}

SymbolSequence sequence_from_json(const nlohmann::json& j) {
  SymbolSequence seq;
  try {
    seq.n_symbols = j.at("n_symbols").get<std::size_t>();
    seq.symbols = j.at("symbols").get<std::vector<Symbol>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad sequence document: ") + e.what());
  }
  seq.validate();
  return seq;
}

void save_sequence(const std::filesystem::path& path, const SymbolSequence& seq) {
  detail::write_json_file(path, to_json(seq));
}

SymbolSequence load_sequence(const std::filesystem::path& path) {
  return sequence_from_json(detail::read_json_file(path));
}

}  // namespace alertpred
