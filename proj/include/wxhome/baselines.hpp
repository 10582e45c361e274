#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wxhome/geo.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome {

/// Maximum-likelihood unigram distribution per area, without smoothing.
class AreaWordModel {
public:
  struct Area {
    std::map<std::string, std::uint64_t> counts;
    std::uint64_t total = 0;
  };

  double probability(StationId area, const std::string& word) const {
    auto a = areas_.find(area);
    if (a == areas_.end() || a->second.total == 0) return 0.0;
    auto w = a->second.counts.find(word);
    if (w == a->second.counts.end()) return 0.0;
    return static_cast<double>(w->second) / static_cast<double>(a->second.total);
  }

  std::uint64_t total(StationId area) const {
    auto a = areas_.find(area);
    return a == areas_.end() ? 0 : a->second.total;
  }

  const std::map<StationId, Area>& areas() const { return areas_; }

  friend AreaWordModel fit_area_word_model(std::span<const LabeledMessage>, const StationIndex&);

private:
  std::map<StationId, Area> areas_;
};

inline AreaWordModel fit_area_word_model(std::span<const LabeledMessage> messages,
                                         const StationIndex& idx) {
  AreaWordModel model;
  for (const Station& s : idx) model.areas_[s.id];
  for (const auto& m : messages) {
    auto it = model.areas_.find(m.station_id);
    if (it == model.areas_.end()) continue;
    for (const auto& t : m.tokens) {
      ++it->second.counts[t];
      ++it->second.total;
    }
  }
  return model;
}

struct ScoredArea {
  StationId station_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredArea&, const ScoredArea&) = default;
};

namespace detail {

inline void sort_scores_descending(std::vector<ScoredArea>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredArea& a, const ScoredArea& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.station_id < b.station_id;
  });
}

inline double summed_probability(const AreaWordModel& model, StationId area,
                                 std::span<const std::string> tokens) {
  double s = 0.0;
  for (const auto& t : tokens) s += model.probability(area, t);
  return s;
}

} // namespace detail

/// Baseline A: sum of p(token|area) over every token occurrence of the user.
inline std::vector<ScoredArea> baseline_a_rank(std::span<const LabeledMessage> messages,
                                               const AreaWordModel& model, const StationIndex& idx) {
  std::vector<ScoredArea> out;
  out.reserve(idx.size());
  for (const Station& s : idx) {
    double score = 0.0;
    for (const auto& m : messages) score += detail::summed_probability(model, s.id, m.tokens);
    out.push_back({s.id, score});
  }
  detail::sort_scores_descending(out);
  return out;
}

/// Most probable posting area of a single message.
inline StationId baseline_b_locate_message(std::span<const std::string> tokens,
                                           const AreaWordModel& model, const StationIndex& idx) {
  StationId best = idx.begin()->id;
  double best_score = -1.0;
  for (const Station& s : idx) {
    const double score = detail::summed_probability(model, s.id, tokens);
    if (score > best_score) {
      best = s.id;
      best_score = score;
    }
  }
  return best;
}

/// Baseline B: majority vote over per-message locations. Stations without
/// votes follow in id order.
inline std::vector<ScoredArea> baseline_b_rank(std::span<const LabeledMessage> messages,
                                               const AreaWordModel& model, const StationIndex& idx) {
  std::map<StationId, std::uint64_t> votes;
  for (const Station& s : idx) votes[s.id] = 0;
  for (const auto& m : messages) ++votes[baseline_b_locate_message(m.tokens, model, idx)];
  std::vector<ScoredArea> out;
  for (const auto& [id, v] : votes) out.push_back({id, static_cast<double>(v)});
  detail::sort_scores_descending(out);
  return out;
}

inline nlohmann::json scored_to_json(const std::vector<ScoredArea>& ranked, std::size_t top_k,
                                     const char* score_field = "score") {
  nlohmann::json arr = nlohmann::json::array();
  const std::size_t n = top_k == 0 ? ranked.size() : std::min(top_k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    arr.push_back({{"station_id", ranked[i].station_id}, {score_field, ranked[i].score}});
  }
  return arr;
}

} // namespace wxhome
