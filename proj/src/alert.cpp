#include "alertpred/alert.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "alertpred/error.hpp"

namespace alertpred {
namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

template <typename Int>
std::optional<Int> parse_fixed_digits(std::string_view s, std::size_t width) {
  if (s.size() != width || !all_digits(s)) return std::nullopt;
  Int value{};
  std::from_chars(s.data(), s.data() + s.size(), value);
  return value;
}

std::optional<std::uint16_t> parse_port(std::string_view s) {
  if (!all_digits(s) || s.size() > 5) return std::nullopt;
  unsigned value = 0;
  std::from_chars(s.data(), s.data() + s.size(), value);
  if (value > 65535) return std::nullopt;
  return static_cast<std::uint16_t>(value);
}

// Field-level validation shared by both canonical formats.
struct RawAlert {
  std::string timestamp, src_ip, src_port, dst_ip, dst_port, signature, category;
};

Alert to_alert(const RawAlert& raw, std::size_t line) {
  Alert a;
  auto ts = parse_timestamp(trim(raw.timestamp));
  if (!ts) throw ParseError(line, "invalid timestamp '" + raw.timestamp + "'");
  a.timestamp = *ts;

  auto src = Ipv4::parse(trim(raw.src_ip));
  if (!src) throw ParseError(line, "invalid src_ip '" + raw.src_ip + "'");
  a.src_ip = *src;
  auto dst = Ipv4::parse(trim(raw.dst_ip));
  if (!dst) throw ParseError(line, "invalid dst_ip '" + raw.dst_ip + "'");
  a.dst_ip = *dst;

  if (auto p = trim(raw.src_port); !p.empty()) {
    a.src_port = parse_port(p);
    if (!a.src_port) throw ParseError(line, "invalid src_port '" + raw.src_port + "'");
  }
  if (auto p = trim(raw.dst_port); !p.empty()) {
    a.dst_port = parse_port(p);
    if (!a.dst_port) throw ParseError(line, "invalid dst_port '" + raw.dst_port + "'");
  }

  a.signature = std::string(trim(raw.signature));
  if (a.signature.empty()) throw ParseError(line, "empty signature");
  a.category = std::string(trim(raw.category));
  if (a.category.empty()) throw ParseError(line, "empty category");
  return a;
}

// RFC 4180 style splitting: double-quoted fields may hold commas and "".
std::optional<std::vector<std::string>> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!std::all_of(cur.begin(), cur.end(), [](char x) { return x == ' '; })) return std::nullopt;
      cur.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted && c != ' ' && c != '\r') return std::nullopt;
      cur.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

constexpr std::array<std::string_view, 7> kColumns = {
    "timestamp", "src_ip", "src_port", "dst_ip", "dst_port", "signature", "category"};

AlertLog parse_csv(std::istream& in) {
  std::vector<Alert> alerts;
  std::string line;
  std::size_t line_no = 0;
  std::array<std::size_t, 7> column_of{};
  std::size_t n_columns = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (!fields) throw ParseError(line_no, "unbalanced quotes");

    if (!have_header) {
      column_of.fill(SIZE_MAX);
      for (std::size_t i = 0; i < fields->size(); ++i) {
        const auto name = trim((*fields)[i]);
        for (std::size_t c = 0; c < kColumns.size(); ++c) {
          if (name == kColumns[c]) column_of[c] = i;
        }
      }
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (column_of[c] == SIZE_MAX) {
          throw ParseError(line_no, "header is missing column '" + std::string(kColumns[c]) + "'");
        }
      }
      n_columns = fields->size();
      have_header = true;
      continue;
    }

    if (fields->size() != n_columns) {
      throw ParseError(line_no, "expected " + std::to_string(n_columns) + " fields, got " +
                                    std::to_string(fields->size()));
    }
    const auto& f = *fields;
    RawAlert raw{f[column_of[0]], f[column_of[1]], f[column_of[2]], f[column_of[3]],
                 f[column_of[4]], f[column_of[5]], f[column_of[6]]};
    alerts.push_back(to_alert(raw, line_no));
  }
  return AlertLog(std::move(alerts));
}

std::string json_field(const nlohmann::json& obj, std::string_view key, bool optional,
                       std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (optional) return {};
    throw ParseError(line, "missing field '" + std::string(key) + "'");
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw ParseError(line, "field '" + std::string(key) + "' must be a string or integer");
}

AlertLog parse_jsonl(std::istream& in) {
  std::vector<Alert> alerts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    RawAlert raw{json_field(obj, "timestamp", false, line_no),
                 json_field(obj, "src_ip", false, line_no),
                 json_field(obj, "src_port", true, line_no),
                 json_field(obj, "dst_ip", false, line_no),
                 json_field(obj, "dst_port", true, line_no),
                 json_field(obj, "signature", false, line_no),
                 json_field(obj, "category", false, line_no)};
    alerts.push_back(to_alert(raw, line_no));
  }
  return AlertLog(std::move(alerts));
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  // YYYY-MM-DDTHH:MM:SS
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
  const auto y = parse_fixed_digits<int>(s.substr(0, 4), 4);
  const auto mo = parse_fixed_digits<unsigned>(s.substr(5, 2), 2);
  const auto d = parse_fixed_digits<unsigned>(s.substr(8, 2), 2);
  const auto h = parse_fixed_digits<int>(s.substr(11, 2), 2);
  const auto mi = parse_fixed_digits<int>(s.substr(14, 2), 2);
  const auto se = parse_fixed_digits<int>(s.substr(17, 2), 2);
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  const year_month_day ymd{year{*y}, month{*mo}, day{*d}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 59) return std::nullopt;

  s.remove_prefix(19);
  std::int64_t micros = 0;
  if (!s.empty() && s.front() == '.') {
    s.remove_prefix(1);
    std::size_t n = 0;
    std::int64_t scale = 100000;
    while (n < s.size() && s[n] >= '0' && s[n] <= '9') {
      if (scale > 0) {
        micros += (s[n] - '0') * scale;
        scale /= 10;
      }
      ++n;
    }
    if (n == 0) return std::nullopt;
    s.remove_prefix(n);
  }

  minutes offset{0};
  if (s == "Z" || s == "z" || s.empty()) {
    // UTC
  } else if (s.size() == 6 && (s[0] == '+' || s[0] == '-') && s[3] == ':') {
    const auto oh = parse_fixed_digits<int>(s.substr(1, 2), 2);
    const auto om = parse_fixed_digits<int>(s.substr(4, 2), 2);
    if (!oh || !om || *oh > 23 || *om > 59) return std::nullopt;
    offset = hours{*oh} + minutes{*om};
    if (s[0] == '-') offset = -offset;
  } else {
    return std::nullopt;
  }

  Timestamp ts = sys_days{ymd} + hours{*h} + minutes{*mi} + seconds{*se};
  ts += microseconds{micros};
  ts -= offset;
  return ts;
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss<microseconds> tod{ts - day_point};
  char buf[48];
  int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                        static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                        static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                        static_cast<int>(tod.seconds().count()));
  std::string out(buf, static_cast<std::size_t>(n));
  if (const auto us = tod.subseconds().count(); us != 0) {
    std::snprintf(buf, sizeof buf, ".%06lld", static_cast<long long>(us));
    out += buf;
  }
  out += 'Z';
  return out;
}

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
  Ipv4 ip;
  for (std::size_t part = 0; part < 4; ++part) {
    const auto dot = text.find('.');
    const auto piece = part < 3 ? text.substr(0, dot) : text;
    if (part < 3 && dot == std::string_view::npos) return std::nullopt;
    if (piece.empty() || piece.size() > 3 || !all_digits(piece)) return std::nullopt;
    unsigned value = 0;
    std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (value > 255) return std::nullopt;
    ip.octets[part] = static_cast<std::uint8_t>(value);
    if (part < 3) text.remove_prefix(dot + 1);
  }
  return ip;
}

std::string Ipv4::to_string() const {
  return std::to_string(octets[0]) + '.' + std::to_string(octets[1]) + '.' +
         std::to_string(octets[2]) + '.' + std::to_string(octets[3]);
}

AlertLog::AlertLog(std::vector<Alert> alerts) : alerts_(std::move(alerts)) {
  std::stable_sort(alerts_.begin(), alerts_.end(),
                   [](const Alert& a, const Alert& b) { return a.timestamp < b.timestamp; });
}

std::optional<AlertFormat> parse_alert_format(std::string_view name) {
  if (name == "csv" || name == "canonical-csv") return AlertFormat::canonical_csv;
  if (name == "jsonl" || name == "canonical-jsonl") return AlertFormat::canonical_jsonl;
  return std::nullopt;
}

AlertFormat alert_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return AlertFormat::canonical_jsonl;
  return AlertFormat::canonical_csv;
}

AlertLog parse_alerts(std::istream& in, AlertFormat format) {
  return format == AlertFormat::canonical_csv ? parse_csv(in) : parse_jsonl(in);
}

AlertLog parse_alert_file(const std::filesystem::path& path, AlertFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alert file " + path.string());
  return parse_alerts(in, format);
}

void write_alerts(std::ostream& out, const AlertLog& log, AlertFormat format) {
  const auto port = [](const std::optional<std::uint16_t>& p) {
    return p ? std::to_string(*p) : std::string();
  };
  if (format == AlertFormat::canonical_csv) {
    out << "timestamp,src_ip,src_port,dst_ip,dst_port,signature,category\n";
    for (const auto& a : log) {
      out << format_timestamp(a.timestamp) << ',' << a.src_ip.to_string() << ',' << port(a.src_port)
          << ',' << a.dst_ip.to_string() << ',' << port(a.dst_port) << ','
          << csv_quote(a.signature) << ',' << csv_quote(a.category) << '\n';
    }
    return;
  }
  for (const auto& a : log) {
    nlohmann::ordered_json obj;
    obj["timestamp"] = format_timestamp(a.timestamp);
    obj["src_ip"] = a.src_ip.to_string();
    obj["src_port"] = a.src_port ? nlohmann::ordered_json(*a.src_port) : nlohmann::ordered_json();
    obj["dst_ip"] = a.dst_ip.to_string();
    obj["dst_port"] = a.dst_port ? nlohmann::ordered_json(*a.dst_port) : nlohmann::ordered_json();
    obj["signature"] = a.signature;
    obj["category"] = a.category;
    out << obj.dump() << '\n';
  }
}

AlertLog deduplicate(const AlertLog& log) {
  using Key = std::tuple<Timestamp, Ipv4, std::optional<std::uint16_t>, Ipv4,
                         std::optional<std::uint16_t>, std::string_view, std::string_view>;
  std::set<Key> seen;
  std::vector<Alert> kept;
  kept.reserve(log.size());
  for (const auto& a : log) {
    Key key{a.timestamp, a.src_ip, a.src_port, a.dst_ip, a.dst_port, a.signature, a.category};
    if (seen.insert(key).second) kept.push_back(a);
  }
  // Input is already time-ordered and the sort is stable, so order is kept.
  return AlertLog(std::move(kept));
}

}  // namespace alertpred
