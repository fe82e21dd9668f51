#pragma once

#include <set>
#include <string>

namespace fixtures {

// Reference vocabulary for the five sample alerts, copied verbatim. It lists
// "115" where the alerts only contain a standalone "5".
inline const std::set<std::string> kPublishedVocabulary = {
    "activity", "application", "attack", "attempted", "recon", "sdf",  "trojan", "unknown",
    "web",      "16",          "168",    "169",       "172",   "178",  "183",    "186",
    "192",      "50",          "83",     "87",        "105",   "112",  "113",    "115",
    "116",      "117",         "684",    "71",        "207",   "209",  "25",     "506",
    "650",      "20",          "206",    "134",       "36489", "201",  "100",    "122",
    "132",      "41297"};

}  // namespace fixtures
