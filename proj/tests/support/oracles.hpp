#pragma once

// Reference computations used only by tests. Each one recomputes its answer
// from raw inputs along a different route than the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "wxhome/baselines.hpp"
#include "wxhome/data.hpp"
#include "wxhome/features.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome::oracle {

/// Great-circle distance along a meridian: R * |dlat| in radians.
inline double meridian_km(double dlat_deg) {
  return kEarthRadiusKm * std::abs(dlat_deg) * std::numbers::pi / 180.0;
}

/// Latitude offset (degrees) that lies `km` north along a meridian.
inline double degrees_north(double km) { return km / kEarthRadiusKm * 180.0 / std::numbers::pi; }

/// Dense dual matrix Q_ij = y_i y_j (x_i . x_j + 1).
inline std::vector<std::vector<double>> dual_matrix(const std::vector<FeatureVector>& xs,
                                                    const std::vector<bool>& labels) {
  const std::size_t n = xs.size();
  std::vector<std::vector<double>> dense(n, std::vector<double>(xs.front().dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : xs[i].active) dense[i][j] = 1.0;
  }
  std::vector<std::vector<double>> q(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 1.0;
      for (std::size_t k = 0; k < dense[i].size(); ++k) dot += dense[i][k] * dense[j][k];
      q[i][j] = (labels[i] == labels[j] ? 1.0 : -1.0) * dot;
    }
  }
  return q;
}

inline double dense_dual_objective(const std::vector<std::vector<double>>& q, const std::vector<double>& a) {
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < a.size(); ++j) quad += a[i] * q[i][j] * a[j];
  }
  return 0.5 * quad - lin;
}

struct DualSolution {
  std::vector<double> alpha;
  double objective = 0.0;
};

/// Projected gradient descent on the box-constrained dual with step 1/L,
/// L = trace(Q) >= largest eigenvalue. Runs until the iterate stops moving.
inline DualSolution projected_gradient_dual(const std::vector<FeatureVector>& xs,
                                            const std::vector<bool>& labels, double C,
                                            std::size_t max_steps = 2'000'000) {
  const auto q = dual_matrix(xs, labels);
  const std::size_t n = xs.size();
  double lip = 0.0;
  for (std::size_t i = 0; i < n; ++i) lip += q[i][i];
  const double step = 1.0 / lip;
  std::vector<double> a(n, 0.0), g(n);
  for (std::size_t it = 0; it < max_steps; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = -1.0;
      for (std::size_t j = 0; j < n; ++j) g[i] += q[i][j] * a[j];
    }
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = std::clamp(a[i] - step * g[i], 0.0, C);
      moved = std::max(moved, std::abs(next - a[i]));
      a[i] = next;
    }
    if (moved < 1e-15) break;
  }
  return {a, dense_dual_objective(q, a)};
}

struct RecountedPmi {
  std::uint64_t n = 0, c_w = 0, c_l = 0, c_wl = 0;
  double value = 0.0;
};

/// Re-counts one (word, label) cell by scanning every token of every message.
inline RecountedPmi recount_pmi(const std::vector<LabeledMessage>& messages, const std::string& word,
                                bool label) {
  RecountedPmi r;
  for (const auto& m : messages) {
    for (const auto& t : m.tokens) {
      ++r.n;
      const bool is_w = t == word;
      const bool is_l = m.rain == label;
      r.c_w += is_w;
      r.c_l += is_l;
      r.c_wl += is_w && is_l;
    }
  }
  const double n = static_cast<double>(r.n);
  r.value = r.c_wl == 0 ? -INFINITY
                        : std::log((static_cast<double>(r.c_wl) / n) /
                                   ((static_cast<double>(r.c_w) / n) * (static_cast<double>(r.c_l) / n)));
  return r;
}

/// Counts mismatches one (date, prediction) pair at a time against a plain
/// std::map copy of the observations.
inline std::pair<std::int64_t, std::int64_t> recount_disagreement(
    const std::vector<std::pair<std::int64_t, bool>>& predictions,
    const std::map<std::pair<StationId, std::int64_t>, bool>& observed, StationId station) {
  std::int64_t mismatches = 0, compared = 0;
  for (const auto& [day, predicted] : predictions) {
    auto it = observed.find({station, day});
    if (it == observed.end()) continue;
    ++compared;
    if (it->second != predicted) ++mismatches;
  }
  return {mismatches, compared};
}

/// Baseline A score recomputed from raw token counts with integer arithmetic
/// per area, divided only at the end of each word.
inline double baseline_a_score(const std::vector<LabeledMessage>& training, StationId area,
                               const std::vector<std::string>& user_tokens) {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& m : training) {
    if (m.station_id != area) continue;
    for (const auto& t : m.tokens) {
      ++counts[t];
      ++total;
    }
  }
  if (total == 0) return 0.0;
  double s = 0.0;
  for (const auto& t : user_tokens) {
    auto it = counts.find(t);
    if (it != counts.end()) s += static_cast<double>(it->second) / static_cast<double>(total);
  }
  return s;
}

} // namespace wxhome::oracle
