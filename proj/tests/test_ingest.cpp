#include <doctest.h>

#include <sstream>

#include "alertpred/alert.hpp"
#include "alertpred/error.hpp"
#include "alertpred/rng.hpp"

using namespace alertpred;

namespace {

AlertLog parse_csv_text(const std::string& body) {
  std::istringstream in("timestamp,src_ip,src_port,dst_ip,dst_port,signature,category\n" + body);
  return parse_alerts(in, AlertFormat::canonical_csv);
}

}  // namespace

TEST_CASE("canonical CSV line parses into all seven fields") {
  const auto log = parse_csv_text(
      "2000-04-16T21:01:00Z,172.16.112.100,1042,172.16.112.20,80,650,attempted-recon\n");
  REQUIRE(log.size() == 1);
  const auto& a = log[0];
  CHECK(format_timestamp(a.timestamp) == "2000-04-16T21:01:00Z");
  CHECK(a.src_ip.to_string() == "172.16.112.100");
  CHECK(a.src_port == std::optional<std::uint16_t>(1042));
  CHECK(a.dst_ip.to_string() == "172.16.112.20");
  CHECK(a.dst_port == std::optional<std::uint16_t>(80));
  CHECK(a.signature == "650");
  CHECK(a.category == "attempted-recon");
}

TEST_CASE("empty input yields an empty log") {
  std::istringstream empty("");
  CHECK(parse_alerts(empty, AlertFormat::canonical_csv).empty());
  std::istringstream empty_jsonl("");
  CHECK(parse_alerts(empty_jsonl, AlertFormat::canonical_jsonl).empty());
  CHECK(parse_csv_text("").empty());
}

TEST_CASE("malformed lines report their line number") {
  try {
    parse_csv_text(
        "2000-04-16T21:01:00Z,172.16.112.100,1042,172.16.112.20,80,650,attempted-recon\n"
        "2000-04-16T21:01:00Z,172.16.112.999,1042,172.16.112.20,80,650,attempted-recon\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.reason().find("src_ip") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_csv_text("2000-04-16T21:01:00Z,1.2.3.4,70000,1.2.3.5,,1,x\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_text("2000-04-16T21:01:00Z,1.2.3.4,,1.2.3.5,,,x\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_text("2000-04-16T21:01:00Z,1.2.3.4,,1.2.3.5,,1,\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_text("2000-02-30T21:01:00Z,1.2.3.4,,1.2.3.5,,1,x\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_text("2000-04-16T21:01:00Z,1.2.3.4,,1.2.3.5,1,x\n"), ParseError);

  std::istringstream no_header("2000-04-16T21:01:00Z,1.2.3.4,,1.2.3.5,,1,x\n");
  CHECK_THROWS_AS(parse_alerts(no_header, AlertFormat::canonical_csv), ParseError);
}

TEST_CASE("IPv4 parsing is strict") {
  CHECK(Ipv4::parse("0.0.0.0"));
  CHECK(Ipv4::parse("255.255.255.255"));
  CHECK_FALSE(Ipv4::parse("256.1.1.1"));
  CHECK_FALSE(Ipv4::parse("1.2.3"));
  CHECK_FALSE(Ipv4::parse("1.2.3.4.5"));
  CHECK_FALSE(Ipv4::parse("1..3.4"));
  CHECK_FALSE(Ipv4::parse("::1"));
  CHECK_FALSE(Ipv4::parse("fe80::1"));
  CHECK_FALSE(Ipv4::parse("1.2.3.-4"));
  CHECK(Ipv4::parse("010.001.002.003")->to_string() == "10.1.2.3");
}

TEST_CASE("timestamps honour offsets and fractions") {
  const auto utc = parse_timestamp("2000-04-16T21:01:00Z");
  const auto offset = parse_timestamp("2000-04-16T23:01:00+02:00");
  REQUIRE(utc);
  REQUIRE(offset);
  CHECK(*utc == *offset);
  const auto frac = parse_timestamp("2000-04-16T21:01:00.25Z");
  REQUIRE(frac);
  CHECK(format_timestamp(*frac) == "2000-04-16T21:01:00.250000Z");
  CHECK_FALSE(parse_timestamp("2000-04-16"));
  CHECK_FALSE(parse_timestamp("2000-04-16T25:00:00Z"));
}

TEST_CASE("records are stably sorted by timestamp") {
  const auto log = parse_csv_text(
      "2000-01-01T00:00:02Z,1.1.1.1,,2.2.2.2,,1,a\n"
      "2000-01-01T00:00:01Z,1.1.1.1,,2.2.2.2,,2,b\n"
      "2000-01-01T00:00:02Z,1.1.1.1,,2.2.2.2,,3,c\n");
  REQUIRE(log.size() == 3);
  CHECK(log[0].signature == "2");
  CHECK(log[1].signature == "1");
  CHECK(log[2].signature == "3");
}

TEST_CASE("JSONL accepts numeric ids, null ports and matches CSV") {
  std::istringstream in(
      R"({"timestamp":"2000-04-16T21:01:00Z","src_ip":"172.16.112.100","src_port":1042,"dst_ip":"172.16.112.20","dst_port":null,"signature":650,"category":"attempted-recon"})"
      "\n\n");
  const auto log = parse_alerts(in, AlertFormat::canonical_jsonl);
  REQUIRE(log.size() == 1);
  CHECK(log[0].signature == "650");
  CHECK_FALSE(log[0].dst_port);

  std::istringstream bad(R"({"timestamp":"2000-04-16T21:01:00Z","src_ip":"1.2.3.4"})");
  CHECK_THROWS_AS(parse_alerts(bad, AlertFormat::canonical_jsonl), ParseError);
}

TEST_CASE("writing then parsing preserves the log in both formats") {
  const auto log = parse_csv_text(
      "2000-01-01T00:00:01Z,1.1.1.1,53,2.2.2.2,,\"WEB-MISC, odd \"\"quoted\"\" sig\",misc-activity\n"
      "2000-01-01T00:00:02.5Z,3.3.3.3,,4.4.4.4,8080,12,trojan-activity\n");
  for (auto fmt : {AlertFormat::canonical_csv, AlertFormat::canonical_jsonl}) {
    std::stringstream buf;
    write_alerts(buf, log, fmt);
    CHECK(parse_alerts(buf, fmt) == log);
  }
  CHECK(log[0].signature == "WEB-MISC, odd \"quoted\" sig");
}

TEST_CASE("deduplicate") {
  const std::string row = "2000-01-01T00:00:01Z,1.1.1.1,10,2.2.2.2,80,1,a\n";

  SUBCASE("exact duplicates collapse to one") {
    CHECK(deduplicate(parse_csv_text(row + row)).size() == 1);
  }
  SUBCASE("differing dst_port keeps both") {
    CHECK(deduplicate(parse_csv_text(row + "2000-01-01T00:00:01Z,1.1.1.1,10,2.2.2.2,81,1,a\n")).size() == 2);
  }
  SUBCASE("absent ports compare equal") {
    const std::string portless = "2000-01-01T00:00:01Z,1.1.1.1,,2.2.2.2,,1,a\n";
    CHECK(deduplicate(parse_csv_text(portless + portless)).size() == 1);
    CHECK(deduplicate(parse_csv_text(portless + row)).size() == 2);
  }
  SUBCASE("five-row fixture keeps #1, #3, #5") {
    const auto log = parse_alert_file(ALERTPRED_TEST_DATA "/dup5.csv", AlertFormat::canonical_csv);
    REQUIRE(log.size() == 5);
    const auto d = deduplicate(log);
    REQUIRE(d.size() == 3);
    CHECK(d[0].signature == "650");
    CHECK(d[1].signature == "506");
    CHECK(d[2].signature == "684");
  }
}

TEST_CASE("deduplicate properties on random logs") {
  Rng rng(20240611);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Alert> alerts;
    const int n = 1 + static_cast<int>(rng.uniform() * 40);
    for (int i = 0; i < n; ++i) {
      Alert a;
      a.timestamp = Timestamp{std::chrono::seconds{static_cast<int>(rng.uniform() * 4)}};
      a.src_ip.octets = {10, 0, 0, static_cast<std::uint8_t>(rng.uniform() * 2)};
      a.dst_ip.octets = {10, 0, 1, 1};
      if (rng.uniform() < 0.5) a.dst_port = static_cast<std::uint16_t>(80 + (rng.uniform() < 0.5));
      a.signature = std::to_string(static_cast<int>(rng.uniform() * 2));
      a.category = "c";
      alerts.push_back(a);
    }
    const AlertLog log(alerts);
    const auto once = deduplicate(log);
    CHECK(deduplicate(once) == once);
    CHECK(once.size() <= log.size());
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j) CHECK_FALSE(once[i] == once[j]);
    // Survivors appear in the same relative order as in the input.
    std::size_t cursor = 0;
    for (const auto& a : once) {
      while (cursor < log.size() && !(log[cursor] == a)) ++cursor;
      CHECK(cursor < log.size());
      ++cursor;
    }
  }
}

TEST_CASE("Snort fast alerts convert to canonical records") {
  std::istringstream in(
      "04/16-21:01:00.123456  [**] [1:650:8] ICMP PING NMAP [**] [Classification: Attempted "
      "Information Leak] [Priority: 2] {ICMP} 172.16.112.100 -> 172.16.112.20\n"
      "04/16-21:01:02  [**] [1:1201:7] ATTACK-RESPONSES 403 Forbidden [**] [Priority: 2] {TCP} "
      "172.16.112.50:80 -> 172.16.113.169:1043\n");
  const auto log = parse_snort_fast(in, 2000);
  REQUIRE(log.size() == 2);
  CHECK(format_timestamp(log[0].timestamp) == "2000-04-16T21:01:00.123456Z");
  CHECK(log[0].signature == "650");
  CHECK(log[0].category == "attempted-information-leak");
  CHECK_FALSE(log[0].src_port);
  CHECK(log[1].category == "unclassified");
  CHECK(log[1].src_port == std::optional<std::uint16_t>(80));
  CHECK(log[1].dst_port == std::optional<std::uint16_t>(1043));

  std::istringstream bad("this is not an alert\n");
  CHECK_THROWS_AS(parse_snort_fast(bad, 2000), ParseError);
}
