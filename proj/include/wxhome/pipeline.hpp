#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/geo.hpp"

namespace wxhome {

struct LabeledMessage {
  std::string user_id;
  StationId station_id = 0;
  LocalDate date;
  std::vector<std::string> tokens;
  bool rain = false;
  /// Position in the originating file; last key of the canonical order.
  std::size_t seq = 0;
};

inline bool canonical_less(const LabeledMessage& a, const LabeledMessage& b) {
  if (a.user_id != b.user_id) return a.user_id < b.user_id;
  if (a.date != b.date) return a.date < b.date;
  return a.seq < b.seq;
}

/// Messages in canonical order: user_id, then date, then original file order.
class Corpus {
public:
  Corpus() = default;
  explicit Corpus(std::vector<LabeledMessage> messages) : messages_(std::move(messages)) {
    std::stable_sort(messages_.begin(), messages_.end(), canonical_less);
  }

  const std::vector<LabeledMessage>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  auto begin() const { return messages_.begin(); }
  auto end() const { return messages_.end(); }

  /// Contiguous per-user runs, in user_id order.
  std::vector<std::pair<std::string, std::span<const LabeledMessage>>> by_user() const {
    std::vector<std::pair<std::string, std::span<const LabeledMessage>>> out;
    std::size_t i = 0;
    while (i < messages_.size()) {
      std::size_t j = i;
      while (j < messages_.size() && messages_[j].user_id == messages_[i].user_id) ++j;
      out.emplace_back(messages_[i].user_id,
                       std::span<const LabeledMessage>(messages_.data() + i, j - i));
      i = j;
    }
    return out;
  }

  std::set<std::string> users() const {
    std::set<std::string> out;
    for (const auto& m : messages_) out.insert(m.user_id);
    return out;
  }

  template <typename Pred>
  Corpus filter(Pred&& keep) const {
    Corpus out;
    for (const auto& m : messages_) {
      if (keep(m)) out.messages_.push_back(m);
    }
    return out;
  }

private:
  std::vector<LabeledMessage> messages_;
};

using HomeTruth = std::map<std::string, StationId>;

// ---------------------------------------------------------------------------
// Text handling

inline bool is_entity_token(std::string_view tok) {
  return !tok.empty() && (tok.front() == '#' || tok.front() == '@');
}

/// Drops hashtags, screen names and URLs (through the end of their
/// whitespace-delimited run); remaining words are rejoined with single spaces.
inline std::string strip_entities(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view tok = text.substr(i, j - i);
    i = j;
    if (tok.empty() || is_entity_token(tok)) continue;
    std::size_t url = std::min(tok.find("http://"), tok.find("https://"));
    if (url != std::string_view::npos) tok = tok.substr(0, url);
    if (tok.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.push_back(ascii_lower(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

/// Tokens for a message: the supplied list (entity tokens removed) when the
/// message was pre-tokenized upstream, otherwise lowercase whitespace split of
/// the entity-stripped text.
inline std::vector<std::string> message_tokens(const RawMessage& m) {
  if (m.tokens) {
    std::vector<std::string> out;
    for (const auto& t : *m.tokens) {
      std::string kept = strip_entities(t);
      if (!kept.empty()) out.push_back(std::move(kept));
    }
    return out;
  }
  return whitespace_tokens(strip_entities(m.text));
}

// ---------------------------------------------------------------------------
// Phase A: location, bots, labels, tokens

struct PhaseAOptions {
  double radius_km = 10.0;
  std::set<std::string> bot_sources;
  int utc_offset_minutes = kDefaultUtcOffsetMinutes;
};

struct PreprocessSummary {
  std::size_t input = 0;
  std::size_t no_coords = 0;
  std::size_t bot_source = 0;
  std::size_t no_station = 0;
  std::size_t no_observation = 0;
  std::size_t no_tokens = 0;
  std::size_t no_weather_words = 0;
  std::size_t home_users_dropped = 0;
  std::size_t home_messages_dropped = 0;
  std::size_t kept = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"input", input},
                          {"dropped",
                           {{"no_coords", no_coords},
                            {"bot_source", bot_source},
                            {"no_station", no_station},
                            {"no_observation", no_observation},
                            {"no_tokens", no_tokens},
                            {"no_weather_words", no_weather_words},
                            {"home_users", home_users_dropped},
                            {"home_messages", home_messages_dropped}}},
                          {"kept", kept}};
  }
};

struct PhaseAResult {
  Corpus corpus;
  PreprocessSummary summary;
};

inline PhaseAResult preprocess_phase_a(std::span<const RawMessage> messages,
                                       const StationIndex& idx, const ObservationTable& obs,
                                       const PhaseAOptions& opt = {}) {
  PhaseAResult res;
  res.summary.input = messages.size();
  std::vector<LabeledMessage> kept;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const RawMessage& m = messages[i];
    if (!m.coords) {
      ++res.summary.no_coords;
      continue;
    }
    if (m.source && opt.bot_sources.contains(*m.source)) {
      ++res.summary.bot_source;
      continue;
    }
    const auto station = nearest_station_within(*m.coords, idx, opt.radius_km);
    if (!station) {
      ++res.summary.no_station;
      continue;
    }
    const LocalDate date = local_date(m.timestamp, opt.utc_offset_minutes);
    const auto rained = obs.lookup(*station, date);
    if (!rained) {
      ++res.summary.no_observation;
      continue;
    }
    auto tokens = message_tokens(m);
    if (tokens.empty()) {
      ++res.summary.no_tokens;
      continue;
    }
    kept.push_back(LabeledMessage{m.user_id, *station, date, std::move(tokens), *rained, i});
  }
  res.summary.kept = kept.size();
  res.corpus = Corpus(std::move(kept));
  return res;
}

// ---------------------------------------------------------------------------
// Phase B: weather-word filter

/// `Lexicon` is anything with `contains(word)`, normally a WeatherLexicon.
template <typename Lexicon>
Corpus preprocess_phase_b(const Corpus& corpus, const Lexicon& lexicon,
                          PreprocessSummary* summary = nullptr) {
  Corpus out = corpus.filter([&](const LabeledMessage& m) {
    return std::any_of(m.tokens.begin(), m.tokens.end(),
                       [&](const std::string& t) { return lexicon.contains(t); });
  });
  if (summary != nullptr) {
    summary->no_weather_words += corpus.size() - out.size();
    summary->kept = out.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Home truth

struct HomeRule {
  /// A user needs strictly more than this many messages.
  std::size_t min_messages = 10;
  /// Inclusive share of messages from the modal station.
  double threshold = 0.9;
};

struct HomeAssignment {
  HomeTruth truth;
  Corpus corpus;
};

inline HomeAssignment assign_home_truth(const Corpus& corpus, const HomeRule& rule = {},
                                        PreprocessSummary* summary = nullptr) {
  if (!(rule.threshold > 0.0 && rule.threshold <= 1.0)) {
    throw UsageError("home threshold must be in (0, 1]");
  }
  HomeAssignment out;
  std::size_t dropped_users = 0, dropped_messages = 0;
  for (const auto& [user, msgs] : corpus.by_user()) {
    bool assigned = false;
    if (msgs.size() > rule.min_messages) {
      std::map<StationId, std::size_t> counts;
      for (const auto& m : msgs) ++counts[m.station_id];
      // map iteration is ascending by id, so `>` keeps the lowest id on ties
      auto best = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      const double need = rule.threshold * static_cast<double>(msgs.size());
      if (static_cast<double>(best->second) + 1e-9 >= need) {
        out.truth.emplace(user, best->first);
        assigned = true;
      }
    }
    if (!assigned) {
      ++dropped_users;
      dropped_messages += msgs.size();
    }
  }
  out.corpus = corpus.filter([&](const LabeledMessage& m) { return out.truth.contains(m.user_id); });
  if (summary != nullptr) {
    summary->home_users_dropped += dropped_users;
    summary->home_messages_dropped += dropped_messages;
    summary->kept = out.corpus.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split by user

/// Deterministic user-level split: a seeded hash of user_id mapped to [0, 1).
struct UserSplit {
  std::uint64_t seed = 1;
  double train_fraction = 0.8;

  double position(std::string_view user) const {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : user) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  bool is_train(std::string_view user) const { return position(user) < train_fraction; }
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json labeled_to_json(const LabeledMessage& m) {
  return nlohmann::json{{"user_id", m.user_id},
                        {"station_id", m.station_id},
                        {"date", m.date.iso()},
                        {"tokens", m.tokens},
                        {"label", m.rain}};
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& m : corpus) out << labeled_to_json(m).dump() << '\n';
}

inline Corpus parse_corpus(std::istream& in, const std::string& source = "<corpus>") {
  std::vector<LabeledMessage> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(view);
      LabeledMessage m;
      m.user_id = j.at("user_id").get<std::string>();
      m.station_id = j.at("station_id").get<StationId>();
      const auto date = LocalDate::parse(j.at("date").get<std::string>());
      if (!date) throw DataError("bad date");
      m.date = *date;
      m.tokens = j.at("tokens").get<std::vector<std::string>>();
      m.rain = j.at("label").get<bool>();
      m.seq = rows.size();
      rows.push_back(std::move(m));
    } catch (const DataError& e) {
      throw DataError(at_line(source, lineno) + e.what());
    } catch (const std::exception& e) {
      throw DataError(at_line(source, lineno) + "malformed corpus line: " + e.what());
    }
  }
  return Corpus(std::move(rows));
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_corpus(in, path.string());
}

inline void write_home_truth(std::ostream& out, const HomeTruth& truth) {
  out << "user_id,station_id\n";
  for (const auto& [user, station] : truth) out << csv::quote(user) << ',' << station << '\n';
}

inline HomeTruth parse_home_truth(std::istream& in, const std::string& source = "<truth>") {
  HomeTruth truth;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) ||
      csv::split(csv::trim_cr(line)) != std::vector<std::string>{"user_id", "station_id"}) {
    throw DataError(source + ": expected header user_id,station_id");
  }
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto f = csv::split(view);
    StationId id = 0;
    if (f.size() != 2 || !csv::parse_number(f[1], id)) {
      throw DataError(at_line(source, lineno) + "malformed truth row");
    }
    if (!truth.emplace(f[0], id).second) {
      throw DataError(at_line(source, lineno) + "duplicate user " + f[0]);
    }
  }
  return truth;
}

inline HomeTruth load_home_truth(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_home_truth(in, path.string());
}

} // namespace wxhome
