#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/geo.hpp"
#include "wxhome/lexicon.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome {

inline constexpr const char* kSynthPrngName = "mt19937_64";

struct SynthConfig {
  std::size_t n_stations = 20;
  double origin_lat = 34.0;
  double origin_lon = 134.0;
  /// Side of the square the station grid spans, in degrees.
  double extent_deg = 2.5;
  /// Station offset from its cell center, as a fraction of the cell size.
  double jitter = 0.1;
  std::size_t n_days = 120;
  std::string start_date = "2016-01-01";
  double p_rain = 0.3;
  /// Rain-front radius; sets the distance over which station weather decorrelates.
  double corr_km = 5.0;
  /// Share of the marginal rain probability produced by per-station noise.
  double noise_share = 0.0;
  std::size_t n_users = 50;
  std::size_t messages_per_user = 100;
  /// Probability a message's weather word matches the day's weather.
  double fidelity = 0.95;
  /// Additional chance of flipping the weather word's polarity.
  double label_noise = 0.05;
  std::size_t rain_words = 25;
  std::size_t dry_words = 9;
  std::size_t neutral_words = 200;
  std::size_t neutral_min = 2;
  std::size_t neutral_max = 4;
  double away_rate = 0.0;
  int utc_offset_minutes = kDefaultUtcOffsetMinutes;

  void validate() const {
    auto bad = [](const std::string& what) { return UsageError("synth config: " + what); };
    if (n_stations < 2) throw bad("n_stations must be at least 2");
    if (!(extent_deg > 0.0)) throw bad("extent_deg must be positive");
    if (!(jitter >= 0.0 && jitter < 0.5)) throw bad("jitter must be in [0, 0.5)");
    if (!GeoPoint::valid(origin_lat, origin_lon) ||
        !GeoPoint::valid(origin_lat + extent_deg, origin_lon + extent_deg)) {
      throw bad("grid leaves the valid coordinate range");
    }
    if (n_days < 1) throw bad("n_days must be positive");
    if (!LocalDate::parse(start_date)) throw bad("start_date must be YYYY-MM-DD");
    if (!(p_rain > 0.0 && p_rain < 1.0)) throw bad("p_rain must be in (0, 1)");
    if (!(corr_km > 0.0) || !std::isfinite(corr_km)) throw bad("corr_km must be positive");
    if (!(noise_share >= 0.0 && noise_share < 1.0)) throw bad("noise_share must be in [0, 1)");
    if (n_users < 1 || messages_per_user < 1) throw bad("need at least one user and message");
    if (!(fidelity > 0.5 && fidelity <= 1.0)) throw bad("fidelity must be in (0.5, 1]");
    if (!(label_noise >= 0.0 && label_noise < 0.5)) throw bad("label_noise must be in [0, 0.5)");
    if (rain_words == 0 || dry_words == 0) throw bad("need at least one rain and one dry word");
    if (neutral_min > neutral_max) throw bad("neutral_min exceeds neutral_max");
    if (neutral_max > 0 && neutral_words == 0) throw bad("neutral words requested but none defined");
    if (!(away_rate >= 0.0 && away_rate <= 0.1)) throw bad("away_rate must be in [0, 0.1]");
    if (utc_offset_minutes < -kMaxUtcOffsetMinutes || utc_offset_minutes > kMaxUtcOffsetMinutes) {
      throw bad("utc offset out of range");
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"n_stations", n_stations},       {"origin_lat", origin_lat},
                          {"origin_lon", origin_lon},       {"extent_deg", extent_deg},
                          {"jitter", jitter},               {"n_days", n_days},
                          {"start_date", start_date},       {"p_rain", p_rain},
                          {"corr_km", corr_km},             {"noise_share", noise_share},
                          {"n_users", n_users},             {"messages_per_user", messages_per_user},
                          {"fidelity", fidelity},           {"label_noise", label_noise},
                          {"rain_words", rain_words},       {"dry_words", dry_words},
                          {"neutral_words", neutral_words}, {"neutral_min", neutral_min},
                          {"neutral_max", neutral_max},     {"away_rate", away_rate},
                          {"utc_offset_minutes", utc_offset_minutes}};
  }
};

/// Seeded stream with platform-independent derived draws; the standard
/// <random> distributions are avoided because their output is not portable.
class SynthRng {
public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }

  std::size_t below(std::size_t n) {
    // rejection keeps the draw exactly uniform
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = engine_(); while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }

  std::size_t poisson(double lambda) {
    std::size_t k = 0;
    double t = -std::log1p(-uniform());
    while (t < lambda) {
      ++k;
      t += -std::log1p(-uniform());
    }
    return k;
  }

private:
  std::mt19937_64 engine_;
};

struct SynthWorld {
  SynthConfig config;
  std::uint64_t seed = 0;
  StationIndex stations;
  ObservationTable observations;
  std::vector<RawMessage> messages;
  HomeTruth truth;
  std::set<std::string> rain_words;
  std::set<std::string> dry_words;
  nlohmann::json metadata;
};

namespace detail {

struct PlanePoint {
  double x = 0.0;
  double y = 0.0;
};

inline double km_per_degree() { return kEarthRadiusKm * std::numbers::pi / 180.0; }

inline PlanePoint to_plane(const GeoPoint& p, const GeoPoint& origin) {
  const double k = km_per_degree();
  return {(p.lon - origin.lon) * k * std::cos(origin.lat * std::numbers::pi / 180.0),
          (p.lat - origin.lat) * k};
}

/// |d| reduced to the shortest offset on a circle of circumference `period`.
inline double wrapped(double d, double period) {
  d = std::fmod(std::abs(d), period);
  return std::min(d, period - d);
}

/// Share of a width x height torus within `radius` of a fixed point, i.e. the
/// area of a disk clipped to the centered rectangle, over the rectangle area.
inline double torus_cover_fraction(double radius, double width, double height) {
  const double a = width / 2.0, b = height / 2.0, r2 = radius * radius;
  // antiderivative of sqrt(r^2 - x^2)
  auto F = [&](double x) { return 0.5 * (x * std::sqrt(std::max(0.0, r2 - x * x)) + r2 * std::asin(std::min(1.0, x / radius))); };
  const double xl = std::min(a, radius);
  double quarter = 0.0;
  if (radius <= b) {
    quarter = F(xl) - F(0.0);
  } else {
    const double xs = std::sqrt(r2 - b * b);
    quarter = xl <= xs ? b * xl : b * xs + F(xl) - F(xs);
  }
  return std::min(1.0, 4.0 * quarter / (width * height));
}

// Above this many fronts per day the front field is indistinguishable from
// independent per-station draws, which are used instead.
inline constexpr double kMaxFrontRate = 20000.0;

} // namespace detail

/// Smallest fraction of days on which two stations' rain flags differ.
inline double min_pairwise_difference(const SynthWorld& w) {
  const auto& st = w.stations.stations();
  const auto start = *LocalDate::parse(w.config.start_date);
  double worst = 1.0;
  for (std::size_t a = 0; a < st.size(); ++a) {
    for (std::size_t b = a + 1; b < st.size(); ++b) {
      std::size_t diff = 0;
      for (std::size_t d = 0; d < w.config.n_days; ++d) {
        const LocalDate day{start.days + static_cast<std::int64_t>(d)};
        diff += *w.observations.lookup(st[a].id, day) != *w.observations.lookup(st[b].id, day);
      }
      worst = std::min(worst, static_cast<double>(diff) / static_cast<double>(w.config.n_days));
    }
  }
  return worst;
}

inline double min_station_spacing_km(const StationIndex& idx) {
  double best = INFINITY;
  for (auto a = idx.begin(); a != idx.end(); ++a) {
    for (auto b = std::next(a); b != idx.end(); ++b) best = std::min(best, haversine_km(a->location, b->location));
  }
  return best;
}

inline double station_diameter_km(const StationIndex& idx) {
  double best = 0.0;
  for (auto a = idx.begin(); a != idx.end(); ++a) {
    for (auto b = std::next(a); b != idx.end(); ++b) best = std::max(best, haversine_km(a->location, b->location));
  }
  return best;
}

/// Builds a complete synthetic world from one seeded stream.
///
/// Weather: each day a Poisson number of circular rain fronts of radius
/// corr_km is dropped uniformly on a periodic rectangle enclosing the grid;
/// covered stations are rainy. Wrapping gives every station the same chance
/// of cover, and once the radius exceeds the half-diagonal every front covers
/// every station. The front rate is solved so each station's rain probability
/// (fronts, then optional independent noise) is p_rain.
///
/// Messages: one weather word per message, matching the day's weather with
/// probability `fidelity` and then flipped with probability `label_noise`,
/// surrounded by neutral filler words.
inline SynthWorld generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SynthRng rng(seed);
  SynthWorld w;
  w.config = cfg;
  w.seed = seed;

  // stations on a jittered grid
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n_stations))));
  const std::size_t rows = (cfg.n_stations + cols - 1) / cols;
  const std::size_t pref_cols = (cols + 1) / 2;
  const double cell_lat = cfg.extent_deg / static_cast<double>(rows);
  const double cell_lon = cfg.extent_deg / static_cast<double>(cols);
  std::vector<Station> stations;
  for (std::size_t i = 0; i < cfg.n_stations; ++i) {
    const std::size_t r = i / cols, c = i % cols;
    const double jy = (rng.uniform() * 2.0 - 1.0) * cfg.jitter;
    const double jx = (rng.uniform() * 2.0 - 1.0) * cfg.jitter;
    Station s;
    s.id = static_cast<StationId>(i + 1);
    s.name = "S" + std::to_string(i + 1);
    s.location = GeoPoint{cfg.origin_lat + (static_cast<double>(r) + 0.5 + jy) * cell_lat,
                          cfg.origin_lon + (static_cast<double>(c) + 0.5 + jx) * cell_lon};
    char pref[16];
    std::snprintf(pref, sizeof pref, "P%02zu", (r / 2) * pref_cols + c / 2 + 1);
    s.prefecture = pref;
    stations.push_back(std::move(s));
  }
  w.stations = StationIndex(stations);

  // weather on a periodic domain one grid cell larger than the station span
  const GeoPoint origin{cfg.origin_lat, cfg.origin_lon};
  std::vector<detail::PlanePoint> xy;
  for (const Station& s : w.stations) xy.push_back(detail::to_plane(s.location, origin));
  const double radius = cfg.corr_km;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& p : xy) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double cell_w = cell_lon * detail::km_per_degree() * std::cos(cfg.origin_lat * std::numbers::pi / 180.0);
  const double cell_h = cell_lat * detail::km_per_degree();
  const double width = xmax - xmin + cell_w;
  const double height = ymax - ymin + cell_h;
  const double x0 = xmin - cell_w / 2.0;
  const double y0 = ymin - cell_h / 2.0;
  const double noise_p = cfg.noise_share * cfg.p_rain;
  const double front_p = 1.0 - (1.0 - cfg.p_rain) / (1.0 - noise_p);
  const double cover = detail::torus_cover_fraction(radius, width, height);
  const double front_rate = -std::log1p(-front_p) / cover;
  const bool independent = front_rate > detail::kMaxFrontRate;

  const LocalDate start = *LocalDate::parse(cfg.start_date);
  const bool check_identifiable = cfg.n_days >= 100 && 2.0 * radius < min_station_spacing_km(w.stations);
  constexpr int kMaxWeatherAttempts = 20;
  int attempts = 0;
  double min_diff = 0.0;
  do {
    ++attempts;
    w.observations = ObservationTable{};
    for (std::size_t d = 0; d < cfg.n_days; ++d) {
      std::vector<bool> rain(xy.size(), false);
      if (independent) {
        for (std::size_t s = 0; s < xy.size(); ++s) rain[s] = rng.bernoulli(front_p);
      } else {
        const std::size_t fronts = rng.poisson(front_rate);
        for (std::size_t f = 0; f < fronts; ++f) {
          const double cx = x0 + rng.uniform() * width;
          const double cy = y0 + rng.uniform() * height;
          for (std::size_t s = 0; s < xy.size(); ++s) {
            const double dx = detail::wrapped(xy[s].x - cx, width);
            const double dy = detail::wrapped(xy[s].y - cy, height);
            if (dx * dx + dy * dy < radius * radius) rain[s] = true;
          }
        }
      }
      if (noise_p > 0.0) {
        for (std::size_t s = 0; s < xy.size(); ++s) {
          if (rng.bernoulli(noise_p)) rain[s] = true;
        }
      }
      std::size_t s = 0;
      for (const Station& st : w.stations) {
        w.observations.insert(st.id, LocalDate{start.days + static_cast<std::int64_t>(d)}, rain[s++]);
      }
    }
    if (!check_identifiable) break;
    min_diff = min_pairwise_difference(w);
  } while (min_diff < 0.10 && attempts < kMaxWeatherAttempts);
  if (check_identifiable && min_diff < 0.10) {
    throw DataError("could not generate distinguishable station weather in " +
                    std::to_string(kMaxWeatherAttempts) + " attempts");
  }

  // vocabulary
  std::vector<std::string> rain_vocab, dry_vocab, neutral_vocab;
  for (std::size_t i = 1; i <= cfg.rain_words; ++i) rain_vocab.push_back("rain-" + std::to_string(i));
  for (std::size_t i = 1; i <= cfg.dry_words; ++i) dry_vocab.push_back("dry-" + std::to_string(i));
  for (std::size_t i = 1; i <= cfg.neutral_words; ++i) neutral_vocab.push_back("neutral-" + std::to_string(i));
  w.rain_words.insert(rain_vocab.begin(), rain_vocab.end());
  w.dry_words.insert(dry_vocab.begin(), dry_vocab.end());

  // users and messages
  const auto& st = w.stations.stations();
  const int id_width = static_cast<int>(std::to_string(cfg.n_users).size());
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    char uid[32];
    std::snprintf(uid, sizeof uid, "u%0*zu", id_width, u + 1);
    const std::size_t home = rng.below(st.size());
    w.truth.emplace(uid, st[home].id);
    for (std::size_t k = 0; k < cfg.messages_per_user; ++k) {
      const std::size_t day = rng.below(cfg.n_days);
      std::size_t at = home;
      if (cfg.away_rate > 0.0 && rng.bernoulli(cfg.away_rate)) {
        at = rng.below(st.size() - 1);
        if (at >= home) ++at;
      }
      const LocalDate date{start.days + static_cast<std::int64_t>(day)};
      const bool rained = *w.observations.lookup(st[at].id, date);
      bool says_rain = rng.bernoulli(cfg.fidelity) ? rained : !rained;
      if (rng.bernoulli(cfg.label_noise)) says_rain = !says_rain;
      const auto& pool = says_rain ? rain_vocab : dry_vocab;

      std::vector<std::string> words;
      const std::size_t n_neutral = cfg.neutral_min + rng.below(cfg.neutral_max - cfg.neutral_min + 1);
      for (std::size_t i = 0; i < n_neutral; ++i) words.push_back(neutral_vocab[rng.below(neutral_vocab.size())]);
      const std::size_t pos = rng.below(words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), pool[rng.below(pool.size())]);

      RawMessage m;
      m.user_id = uid;
      m.timestamp = local_midnight_epoch(date, cfg.utc_offset_minutes) +
                    static_cast<std::int64_t>(rng.below(86400));
      for (std::size_t i = 0; i < words.size(); ++i) m.text += (i ? " " : "") + words[i];
      // post within 1 km of the station
      const double bearing = rng.uniform() * 2.0 * std::numbers::pi;
      const double dist = rng.uniform() * 1.0;
      const double kmdeg = detail::km_per_degree();
      const GeoPoint loc = st[at].location;
      m.coords = GeoPoint{loc.lat + dist * std::sin(bearing) / kmdeg,
                          loc.lon + dist * std::cos(bearing) / (kmdeg * std::cos(loc.lat * std::numbers::pi / 180.0))};
      m.source = "synth";
      w.messages.push_back(std::move(m));
    }
  }

  w.metadata = nlohmann::json{{"format_version", 1},
                              {"config", cfg.to_json()},
                              {"seed", seed},
                              {"prng", kSynthPrngName},
                              {"weather_model", independent ? "independent" : "fronts"},
                              {"front_rate_per_day", front_rate},
                              {"weather_attempts", attempts}};
  return w;
}

inline void write_world(const SynthWorld& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_atomically(dir / "stations.csv", [&](std::ostream& o) { write_stations(o, w.stations); });
  write_atomically(dir / "observations.csv", [&](std::ostream& o) { write_observations(o, w.observations); });
  write_atomically(dir / "messages.jsonl", [&](std::ostream& o) { write_messages(o, w.messages); });
  write_atomically(dir / "truth.csv", [&](std::ostream& o) { write_home_truth(o, w.truth); });
  write_atomically(dir / "rain_words.txt", [&](std::ostream& o) { write_word_list(o, w.rain_words); });
  write_atomically(dir / "norain_words.txt", [&](std::ostream& o) { write_word_list(o, w.dry_words); });
  write_atomically(dir / "world.json", [&](std::ostream& o) { o << w.metadata.dump(2) << '\n'; });
}

} // namespace wxhome
