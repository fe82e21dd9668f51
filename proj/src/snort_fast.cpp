#include <cctype>
#include <cstdio>
#include <istream>
#include <regex>
#include <string>

#include "alertpred/alert.hpp"
#include "alertpred/error.hpp"

namespace alertpred {
namespace {

const std::regex& fast_line_pattern() {
  static const std::regex re(
      R"(^\s*(\d{2})/(\d{2})-(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?\s+\[\*\*\]\s+)"
      R"(\[(\d+):(\d+):(\d+)\]\s+(.*?)\s+\[\*\*\]\s*)"
      R"((?:\[Classification:\s*([^\]]*)\]\s*)?(?:\[Priority:\s*\d+\]\s*)?)"
      R"(\{[^}]*\}\s+([0-9.]+)(?::(\d+))?\s+->\s+([0-9.]+)(?::(\d+))?\s*$)");
  return re;
}

std::string classification_to_category(std::string text) {
  std::string out;
  bool pending_dash = false;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc) || c == '-') {
      pending_dash = !out.empty();
      continue;
    }
    if (pending_dash) out.push_back('-');
    pending_dash = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out.empty() ? "unclassified" : out;
}

}  // namespace

AlertLog parse_snort_fast(std::istream& in, int year) {
  std::vector<Alert> alerts;
  std::string line;
  std::size_t line_no = 0;
  std::smatch m;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!std::regex_match(line, m, fast_line_pattern())) {
      throw ParseError(line_no, "not a Snort fast alert line");
    }
    char ts[64];
    std::string frac = m[6].matched ? "." + m[6].str() : std::string();
    std::snprintf(ts, sizeof ts, "%04d-%s-%sT%s:%s:%s%sZ", year, m[1].str().c_str(),
                  m[2].str().c_str(), m[3].str().c_str(), m[4].str().c_str(), m[5].str().c_str(),
                  frac.c_str());

    Alert a;
    auto parsed = parse_timestamp(ts);
    if (!parsed) throw ParseError(line_no, "invalid timestamp");
    a.timestamp = *parsed;

    auto src = Ipv4::parse(m[12].str());
    auto dst = Ipv4::parse(m[14].str());
    if (!src || !dst) throw ParseError(line_no, "invalid IPv4 address");
    a.src_ip = *src;
    a.dst_ip = *dst;
    const auto port = [&](int group) -> std::optional<std::uint16_t> {
      if (!m[group].matched) return std::nullopt;
      const unsigned long v = std::stoul(m[group].str());
      if (v > 65535) throw ParseError(line_no, "port out of range");
      return static_cast<std::uint16_t>(v);
    };
    a.src_port = port(13);
    a.dst_port = port(15);
    a.signature = m[8].str();
    a.category = classification_to_category(m[11].matched ? m[11].str() : std::string());
    alerts.push_back(std::move(a));
  }
  return AlertLog(std::move(alerts));
}

}  // namespace alertpred
