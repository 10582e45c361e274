#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wxhome/error.hpp"
#include "wxhome/geo.hpp"

namespace wxhome {

// ---------------------------------------------------------------------------
// Calendar

/// A calendar day in some fixed UTC offset, stored as days since 1970-01-01.
struct LocalDate {
  std::int64_t days = 0;

  std::chrono::year_month_day ymd() const {
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days}}};
  }

  std::string iso() const {
    const auto d = ymd();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
  }

  /// Parses strict `YYYY-MM-DD`; returns nullopt on anything else.
  static std::optional<LocalDate> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto num = [&](std::string_view part, auto& out) {
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      return ec == std::errc{} && p == part.data() + part.size();
    };
    if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) {
      return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return LocalDate{std::chrono::sys_days{ymd}.time_since_epoch().count()};
  }

  friend auto operator<=>(const LocalDate&, const LocalDate&) = default;
};

inline constexpr int kDefaultUtcOffsetMinutes = 540;
inline constexpr int kMaxUtcOffsetMinutes = 18 * 60;

inline LocalDate local_date(std::int64_t epoch_seconds, int offset_minutes) {
  if (offset_minutes < -kMaxUtcOffsetMinutes || offset_minutes > kMaxUtcOffsetMinutes) {
    throw UsageError("utc offset out of range: " + std::to_string(offset_minutes));
  }
  const std::int64_t shifted = epoch_seconds + std::int64_t{offset_minutes} * 60;
  // floor division so pre-epoch instants land on the right day
  std::int64_t day = shifted / 86400;
  if (shifted % 86400 < 0) --day;
  return LocalDate{day};
}

/// Epoch seconds of local midnight starting `date` under `offset_minutes`.
inline std::int64_t local_midnight_epoch(LocalDate date, int offset_minutes) {
  return date.days * 86400 - std::int64_t{offset_minutes} * 60;
}

// ---------------------------------------------------------------------------
// CSV helpers

namespace csv {

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is available on libstdc++ 11+
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
  }
}

/// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

} // namespace csv

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

/// Writes via a temporary sibling file and renames it into place.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Stations

inline StationIndex parse_stations(std::istream& in, const std::string& source = "<stations>") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(source + ": empty stations file");
  ++lineno;
  {
    auto header = csv::split(csv::trim_cr(line));
    if (header != std::vector<std::string>{"id", "name", "lat", "lon", "prefecture"}) {
      throw DataError(at_line(source, lineno) + "expected header id,name,lat,lon,prefecture");
    }
  }
  std::vector<Station> rows;
  std::map<StationId, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto f = csv::split(view);
    if (f.size() != 5) throw DataError(at_line(source, lineno) + "expected 5 fields");
    Station s;
    if (!csv::parse_number(f[0], s.id) || s.id < 0) {
      throw DataError(at_line(source, lineno) + "bad station id '" + f[0] + "'");
    }
    double lat = 0, lon = 0;
    if (!csv::parse_number(f[2], lat) || !csv::parse_number(f[3], lon)) {
      throw DataError(at_line(source, lineno) + "bad coordinates");
    }
    if (!GeoPoint::valid(lat, lon)) {
      throw DataError(at_line(source, lineno) + "coordinates out of range");
    }
    if (f[4].empty()) throw DataError(at_line(source, lineno) + "empty prefecture");
    if (auto [it, inserted] = seen.emplace(s.id, lineno); !inserted) {
      throw DataError(at_line(source, lineno) + "duplicate station id " + std::to_string(s.id) +
                      " (first on line " + std::to_string(it->second) + ")");
    }
    s.name = f[1];
    s.location = GeoPoint{lat, lon};
    s.prefecture = f[4];
    rows.push_back(std::move(s));
  }
  if (rows.empty()) throw DataError(source + ": no stations");
  return StationIndex(std::move(rows));
}

inline StationIndex load_stations(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_stations(in, path.string());
}

inline void write_stations(std::ostream& out, const StationIndex& idx) {
  out << "id,name,lat,lon,prefecture\n";
  for (const Station& s : idx) {
    out << s.id << ',' << csv::quote(s.name) << ',' << csv::format_double(s.location.lat) << ','
        << csv::format_double(s.location.lon) << ',' << csv::quote(s.prefecture) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Observations

/// Boolean rain flag per (station, local day).
class ObservationTable {
public:
  using Key = std::pair<StationId, std::int64_t>;

  /// Returns false if the key already exists.
  bool insert(StationId station, LocalDate date, bool rained) {
    return table_.emplace(Key{station, date.days}, rained).second;
  }

  std::optional<bool> lookup(StationId station, LocalDate date) const {
    auto it = table_.find(Key{station, date.days});
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return table_.size(); }
  const std::map<Key, bool>& entries() const { return table_; }

  friend bool operator==(const ObservationTable&, const ObservationTable&) = default;

private:
  std::map<Key, bool> table_;
};

inline ObservationTable parse_observations(std::istream& in, const StationIndex& idx,
                                           const std::string& source = "<observations>") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(source + ": empty observations file");
  ++lineno;
  if (csv::split(csv::trim_cr(line)) != std::vector<std::string>{"station_id", "date", "rained"}) {
    throw DataError(at_line(source, lineno) + "expected header station_id,date,rained");
  }
  ObservationTable table;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.empty()) continue;
    const auto f = csv::split(view);
    if (f.size() != 3) throw DataError(at_line(source, lineno) + "expected 3 fields");
    StationId id = 0;
    if (!csv::parse_number(f[0], id)) {
      throw DataError(at_line(source, lineno) + "bad station id '" + f[0] + "'");
    }
    if (!idx.contains(id)) {
      throw DataError(at_line(source, lineno) + "unknown station " + std::to_string(id));
    }
    const auto date = LocalDate::parse(f[1]);
    if (!date) throw DataError(at_line(source, lineno) + "bad date '" + f[1] + "'");
    bool rained = false;
    if (f[2] == "1") {
      rained = true;
    } else if (f[2] != "0") {
      throw DataError(at_line(source, lineno) + "rained must be 0 or 1, got '" + f[2] + "'");
    }
    if (!table.insert(id, *date, rained)) {
      throw DataError(at_line(source, lineno) + "duplicate observation for station " +
                      std::to_string(id) + " on " + date->iso());
    }
  }
  return table;
}

inline ObservationTable load_observations(const std::filesystem::path& path,
                                          const StationIndex& idx) {
  auto in = open_input(path);
  return parse_observations(in, idx, path.string());
}

inline void write_observations(std::ostream& out, const ObservationTable& table) {
  out << "station_id,date,rained\n";
  for (const auto& [key, rained] : table.entries()) {
    out << key.first << ',' << LocalDate{key.second}.iso() << ',' << (rained ? '1' : '0') << '\n';
  }
}

// ---------------------------------------------------------------------------
// Messages

struct RawMessage {
  std::string user_id;
  std::int64_t timestamp = 0;
  std::string text;
  std::optional<GeoPoint> coords;
  std::optional<std::string> source;
  std::optional<std::vector<std::string>> tokens;
};

enum class ParseMode { strict, lenient };

struct MessageLoad {
  std::vector<RawMessage> messages;
  std::size_t skipped = 0;
};

namespace detail {

inline RawMessage message_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("message is not a JSON object");
  RawMessage m;
  if (!j.contains("user_id") || !j["user_id"].is_string()) {
    throw DataError("missing string field 'user_id'");
  }
  m.user_id = j["user_id"].get<std::string>();
  if (!j.contains("ts") || !j["ts"].is_number_integer()) {
    throw DataError("missing integer field 'ts'");
  }
  m.timestamp = j["ts"].get<std::int64_t>();
  if (m.timestamp < 0) throw DataError("negative timestamp");
  if (j.contains("tokens") && !j["tokens"].is_null()) {
    if (!j["tokens"].is_array()) throw DataError("'tokens' must be an array");
    std::vector<std::string> toks;
    for (const auto& t : j["tokens"]) {
      if (!t.is_string()) throw DataError("'tokens' must contain strings");
      toks.push_back(t.get<std::string>());
    }
    m.tokens = std::move(toks);
  }
  if (j.contains("text") && !j["text"].is_null()) {
    if (!j["text"].is_string()) throw DataError("'text' must be a string");
    m.text = j["text"].get<std::string>();
  } else if (!m.tokens) {
    throw DataError("message has neither 'text' nor 'tokens'");
  }
  const bool has_lat = j.contains("lat") && !j["lat"].is_null();
  const bool has_lon = j.contains("lon") && !j["lon"].is_null();
  if (has_lat != has_lon) throw DataError("'lat' and 'lon' must appear together");
  if (has_lat) {
    if (!j["lat"].is_number() || !j["lon"].is_number()) {
      throw DataError("'lat'/'lon' must be numbers");
    }
    const double lat = j["lat"].get<double>();
    const double lon = j["lon"].get<double>();
    if (!GeoPoint::valid(lat, lon)) throw DataError("coordinates out of range");
    m.coords = GeoPoint{lat, lon};
  }
  if (j.contains("source") && !j["source"].is_null()) {
    if (!j["source"].is_string()) throw DataError("'source' must be a string");
    m.source = j["source"].get<std::string>();
  }
  return m;
}

} // namespace detail

inline MessageLoad parse_messages(std::istream& in, ParseMode mode,
                                  const std::string& source = "<messages>") {
  MessageLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      out.messages.push_back(detail::message_from_json(nlohmann::json::parse(view)));
    } catch (const std::exception& e) {
      if (mode == ParseMode::strict) throw DataError(at_line(source, lineno) + e.what());
      ++out.skipped;
    }
  }
  return out;
}

inline MessageLoad load_messages(const std::filesystem::path& path,
                                 ParseMode mode = ParseMode::strict) {
  auto in = open_input(path);
  return parse_messages(in, mode, path.string());
}

inline nlohmann::json message_to_json(const RawMessage& m) {
  nlohmann::json j;
  j["user_id"] = m.user_id;
  j["ts"] = m.timestamp;
  j["text"] = m.text;
  if (m.coords) {
    j["lat"] = m.coords->lat;
    j["lon"] = m.coords->lon;
  }
  if (m.source) j["source"] = *m.source;
  if (m.tokens) j["tokens"] = *m.tokens;
  return j;
}

inline void write_messages(std::ostream& out, const std::vector<RawMessage>& messages) {
  for (const RawMessage& m : messages) out << message_to_json(m).dump() << '\n';
}

} // namespace wxhome
