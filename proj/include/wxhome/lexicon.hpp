#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome {

struct WordCounts {
  std::uint64_t total = 0;  // C(w)
  std::uint64_t rain = 0;   // C(w, True)
  std::uint64_t dry = 0;    // C(w, False)
  std::uint64_t users = 0;  // U(w)

  std::uint64_t with(bool label) const { return label ? rain : dry; }
};

/// Word/label co-occurrence counts where every token occurrence of a message
/// inherits the message label.
struct CountTable {
  std::map<std::string, WordCounts> words;
  std::uint64_t rain_total = 0;  // C(True)
  std::uint64_t dry_total = 0;   // C(False)
  std::uint64_t n = 0;           // N

  std::uint64_t label_total(bool label) const { return label ? rain_total : dry_total; }

  const WordCounts* find(std::string_view w) const {
    auto it = words.find(std::string(w));
    return it == words.end() ? nullptr : &it->second;
  }
};

inline CountTable count_statistics(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("cannot count statistics of an empty corpus");
  CountTable ct;
  std::map<std::string, std::set<std::string>> users_of;
  for (const LabeledMessage& m : corpus) {
    for (const std::string& tok : m.tokens) {
      WordCounts& wc = ct.words[tok];
      ++wc.total;
      (m.rain ? wc.rain : wc.dry) += 1;
      (m.rain ? ct.rain_total : ct.dry_total) += 1;
      ++ct.n;
      users_of[tok].insert(m.user_id);
    }
  }
  for (auto& [w, wc] : ct.words) wc.users = users_of[w].size();
  return ct;
}

/// Natural-log PMI between a word occurrence and a label. A word that never
/// carries `label` yields -infinity and is never selected as a candidate.
inline double pmi(const CountTable& ct, std::string_view word, bool label) {
  const WordCounts* wc = ct.find(word);
  const std::uint64_t cl = ct.label_total(label);
  if (wc == nullptr || wc->total == 0) throw UsageError("pmi: word '" + std::string(word) + "' unseen");
  if (cl == 0) throw UsageError("pmi: label never observed");
  const std::uint64_t cwl = wc->with(label);
  if (cwl == 0) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(ct.n);
  const double p_wl = static_cast<double>(cwl) / n;
  const double p_w = static_cast<double>(wc->total) / n;
  const double p_l = static_cast<double>(cl) / n;
  return std::log(p_wl / (p_w * p_l));
}

struct Candidate {
  std::string word;
  double pmi = 0.0;
  std::uint64_t freq = 0;
  std::uint64_t users = 0;
};

struct CandidateOptions {
  /// Words need strictly more occurrences than this.
  std::uint64_t min_freq = 10;
  /// Applied after truncation; words used by fewer users are removed.
  std::uint64_t min_users = 10;
  std::size_t top = 2000;
  /// Keep only words over-represented with the label. Used by automatic
  /// lexicon mode so the two candidate lists cannot share a word.
  bool positive_only = false;
};

inline std::vector<Candidate> select_candidates(const CountTable& ct, bool label,
                                                const CandidateOptions& opt = {}) {
  std::vector<Candidate> ranked;
  if (ct.label_total(label) == 0) return ranked;
  for (const auto& [w, wc] : ct.words) {
    if (wc.total <= opt.min_freq) continue;
    const double v = pmi(ct, w, label);
    if (std::isinf(v)) continue;
    if (opt.positive_only && !(v > 0.0)) continue;
    ranked.push_back(Candidate{w, v, wc.total, wc.users});
  }
  // std::map iteration already gives alphabetical order; stable_sort keeps it on ties
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Candidate& a, const Candidate& b) { return a.pmi > b.pmi; });
  if (ranked.size() > opt.top) ranked.resize(opt.top);
  std::erase_if(ranked, [&](const Candidate& c) { return c.users < opt.min_users; });
  return ranked;
}

struct WeatherLexicon {
  std::set<std::string> rain_words;
  std::set<std::string> norain_words;

  bool contains(const std::string& w) const {
    return rain_words.contains(w) || norain_words.contains(w);
  }
  bool empty() const { return rain_words.empty() && norain_words.empty(); }
};

/// Curated lists are intersected with the candidates; an absent list lets the
/// candidates through unchanged.
inline WeatherLexicon build_lexicon(const std::vector<Candidate>& rain_candidates,
                                    const std::vector<Candidate>& norain_candidates,
                                    const std::optional<std::set<std::string>>& curated_rain,
                                    const std::optional<std::set<std::string>>& curated_norain) {
  auto pick = [](const std::vector<Candidate>& cands,
                 const std::optional<std::set<std::string>>& curated) {
    std::set<std::string> out;
    for (const Candidate& c : cands) {
      if (!curated || curated->contains(c.word)) out.insert(c.word);
    }
    return out;
  };
  WeatherLexicon lex{pick(rain_candidates, curated_rain), pick(norain_candidates, curated_norain)};
  if (curated_rain && curated_norain) {
    for (const auto& w : *curated_rain) {
      if (curated_norain->contains(w)) {
        throw DataError("word '" + w + "' is curated as both rain and no-rain");
      }
    }
  }
  for (const auto& w : lex.rain_words) {
    if (lex.norain_words.contains(w)) {
      throw DataError("word '" + w + "' selected for both rain and no-rain");
    }
  }
  return lex;
}

// ---------------------------------------------------------------------------
// Files

/// One word per line; blank lines and `#` comments ignored.
inline std::set<std::string> parse_word_list(std::istream& in) {
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view v = csv::trim_cr(line);
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
    if (!v.empty()) words.emplace(v);
  }
  return words;
}

inline std::set<std::string> load_word_list(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_word_list(in);
}

inline void write_word_list(std::ostream& out, const std::set<std::string>& words) {
  for (const auto& w : words) out << w << '\n';
}

inline void write_candidates(std::ostream& out, const std::vector<Candidate>& cands) {
  out << "word,pmi,freq,users\n";
  for (const Candidate& c : cands) {
    out << csv::quote(c.word) << ',' << csv::format_double(c.pmi) << ',' << c.freq << ','
        << c.users << '\n';
  }
}

} // namespace wxhome
