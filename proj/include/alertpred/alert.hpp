#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alertpred {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

// Parses RFC 3339 ("2000-04-16T21:01:00Z", optional fraction, Z or +hh:mm
// offset). A space is accepted in place of 'T'. Result is UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);

// UTC, "Z" suffix; fractional part only when non-zero.
std::string format_timestamp(Timestamp ts);

struct Ipv4 {
  std::array<std::uint8_t, 4> octets{};

  // Exactly four dot-separated decimal octets in 0..255. Rejects IPv6,
  // empty parts, signs and more than three digits per part.
  static std::optional<Ipv4> parse(std::string_view text);
  std::string to_string() const;

  auto operator<=>(const Ipv4&) const = default;
};

// One normalized IDS alert.
struct Alert {
  Timestamp timestamp{};
  Ipv4 src_ip;
  std::optional<std::uint16_t> src_port;
  Ipv4 dst_ip;
  std::optional<std::uint16_t> dst_port;
  std::string signature;
  std::string category;

  // Equality over all seven attributes; the duplicate key.
  bool operator==(const Alert&) const = default;
};

// Alerts ordered by timestamp, ties kept in input order.
class AlertLog {
 public:
  AlertLog() = default;
  // Stable-sorts by timestamp.
  explicit AlertLog(std::vector<Alert> alerts);

  std::span<const Alert> alerts() const noexcept { return alerts_; }
  const Alert& operator[](std::size_t i) const { return alerts_[i]; }
  std::size_t size() const noexcept { return alerts_.size(); }
  bool empty() const noexcept { return alerts_.empty(); }
  auto begin() const noexcept { return alerts_.begin(); }
  auto end() const noexcept { return alerts_.end(); }

  bool operator==(const AlertLog&) const = default;

 private:
  std::vector<Alert> alerts_;
};

enum class AlertFormat { canonical_csv, canonical_jsonl };

std::optional<AlertFormat> parse_alert_format(std::string_view name);
// Picks jsonl for ".jsonl"/".json" extensions, csv otherwise.
AlertFormat alert_format_from_path(const std::filesystem::path& path);

// Throws ParseError (with 1-based line number) on malformed records.
AlertLog parse_alerts(std::istream& in, AlertFormat format);
AlertLog parse_alert_file(const std::filesystem::path& path, AlertFormat format);

void write_alerts(std::ostream& out, const AlertLog& log, AlertFormat format);

// Keeps the first occurrence of every distinct 7-tuple, order preserved.
AlertLog deduplicate(const AlertLog& log);

// Converts Snort "fast" alert lines, e.g.
//   04/16-21:01:00.123456  [**] [1:650:8] ICMP PING NMAP [**]
//   [Classification: Attempted Information Leak] [Priority: 2] {ICMP}
//   172.16.112.100 -> 172.16.112.20
// The fast format omits the year, so it is supplied by the caller. The
// signature becomes the numeric SID; the classification text is lowercased
// with spaces replaced by '-'.
AlertLog parse_snort_fast(std::istream& in, int year);

}  // namespace alertpred
