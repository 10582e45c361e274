#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/features.hpp"
#include "wxhome/geo.hpp"
#include "wxhome/pipeline.hpp"
#include "wxhome/svm.hpp"

namespace wxhome {

struct WeatherPoint {
  LocalDate date;
  bool rain = false;
};

/// One predicted label per message, ordered by date then corpus order.
using WeatherSeries = std::vector<WeatherPoint>;

/// The stored label of each message is deliberately ignored here.
inline WeatherSeries predict_weather_series(std::span<const LabeledMessage> messages,
                                            const LinearModel& model, const Vocabulary& vocab) {
  std::vector<std::size_t> order(messages.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return messages[a].date < messages[b].date;
  });
  WeatherSeries series;
  series.reserve(messages.size());
  for (std::size_t i : order) {
    const auto& m = messages[i];
    series.push_back({m.date, predict(model, vectorize(m.tokens, vocab))});
  }
  return series;
}

/// Series built from the stored observation labels instead of predictions.
inline WeatherSeries stored_label_series(std::span<const LabeledMessage> messages) {
  WeatherSeries series;
  for (const auto& m : messages) series.push_back({m.date, m.rain});
  std::stable_sort(series.begin(), series.end(),
                   [](const WeatherPoint& a, const WeatherPoint& b) { return a.date < b.date; });
  return series;
}

enum class MissingPolicy { strict, allow_missing };

struct AreaScore {
  StationId station_id = 0;
  std::int64_t disagreements = 0;
  std::int64_t compared = 0;

  friend bool operator==(const AreaScore&, const AreaScore&) = default;
};

/// Mismatches between the series and a station's observed rain. Under
/// allow_missing, days without an observation are skipped and not compared.
inline AreaScore disagreement(const WeatherSeries& series, const ObservationTable& obs,
                              StationId station, MissingPolicy policy = MissingPolicy::strict) {
  AreaScore s{station, 0, static_cast<std::int64_t>(series.size())};
  for (const auto& p : series) {
    const auto observed = obs.lookup(station, p.date);
    if (!observed) {
      if (policy == MissingPolicy::strict) {
        throw DataError("no observation for station " + std::to_string(station) + " on " +
                        p.date.iso());
      }
      --s.compared;
      continue;
    }
    if (*observed != p.rain) ++s.disagreements;
  }
  return s;
}

using RankedAreas = std::vector<AreaScore>;

inline RankedAreas rank_areas(const WeatherSeries& series, const ObservationTable& obs,
                              const StationIndex& idx, MissingPolicy policy = MissingPolicy::strict) {
  RankedAreas ranked;
  ranked.reserve(idx.size());
  for (const Station& s : idx) ranked.push_back(disagreement(series, obs, s.id, policy));

  if (policy == MissingPolicy::strict) {
    std::sort(ranked.begin(), ranked.end(), [](const AreaScore& a, const AreaScore& b) {
      if (a.disagreements != b.disagreements) return a.disagreements < b.disagreements;
      return a.station_id < b.station_id;
    });
  } else {
    // rate = disagreements / compared, compared exactly by cross-multiplication
    std::sort(ranked.begin(), ranked.end(), [](const AreaScore& a, const AreaScore& b) {
      if ((a.compared == 0) != (b.compared == 0)) return b.compared == 0;
      if (a.compared != 0) {
        const auto lhs = a.disagreements * b.compared;
        const auto rhs = b.disagreements * a.compared;
        if (lhs != rhs) return lhs < rhs;
      }
      return a.station_id < b.station_id;
    });
  }
  return ranked;
}

inline RankedAreas rank_areas(std::span<const LabeledMessage> messages, const LinearModel& model,
                              const Vocabulary& vocab, const ObservationTable& obs,
                              const StationIndex& idx, MissingPolicy policy = MissingPolicy::strict) {
  return rank_areas(predict_weather_series(messages, model, vocab), obs, idx, policy);
}

inline StationId estimate_home(std::span<const LabeledMessage> messages, const LinearModel& model,
                               const Vocabulary& vocab, const ObservationTable& obs,
                               const StationIndex& idx, MissingPolicy policy = MissingPolicy::strict) {
  return rank_areas(messages, model, vocab, obs, idx, policy).front().station_id;
}

inline nlohmann::json ranked_to_json(const RankedAreas& ranked, std::size_t top_k) {
  nlohmann::json arr = nlohmann::json::array();
  const std::size_t n = top_k == 0 ? ranked.size() : std::min(top_k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    arr.push_back({{"station_id", ranked[i].station_id},
                   {"disagreements", ranked[i].disagreements},
                   {"compared", ranked[i].compared}});
  }
  return arr;
}

} // namespace wxhome
