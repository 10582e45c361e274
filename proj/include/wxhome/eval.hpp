#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/geo.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome {

/// Full station ranking per evaluated user.
using EstimationResult = std::map<std::string, std::vector<StationId>>;

enum class Denominator {
  all_users,  // divide by |U|, as the per-prefecture formula is written
  per_group,  // divide by |U_p|
};

struct PrefecturePrecision {
  std::size_t users = 0;
  std::size_t correct = 0;
  double precision = 0.0;
};

namespace detail {

inline StationId truth_of(const std::string& user, const HomeTruth& truth) {
  auto it = truth.find(user);
  if (it == truth.end()) throw DataError("user '" + user + "' has no home truth");
  return it->second;
}

inline void check_metric_args(std::size_t k, double d_km) {
  if (k < 1) throw UsageError("k must be at least 1");
  if (!(d_km > 0.0)) throw UsageError("correct distance must be positive");
}

} // namespace detail

/// Share of users with some top-k estimate strictly closer than d_km to home.
inline double precision_at_k(const EstimationResult& results, const HomeTruth& truth,
                             const StationIndex& idx, std::size_t k, double d_km) {
  detail::check_metric_args(k, d_km);
  if (results.empty()) throw DataError("no users to evaluate");
  std::size_t hits = 0;
  for (const auto& [user, ranking] : results) {
    const GeoPoint home = idx.at(detail::truth_of(user, truth)).location;
    const std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (haversine_km(idx.at(ranking[i]).location, home) < d_km) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

/// Per-prefecture precision where a hit must also lie in the home prefecture.
/// Prefectures without evaluated users are absent.
inline std::map<std::string, PrefecturePrecision> precision_by_prefecture(
    const EstimationResult& results, const HomeTruth& truth, const StationIndex& idx,
    std::size_t k, double d_km, Denominator denom = Denominator::all_users) {
  detail::check_metric_args(k, d_km);
  if (results.empty()) throw DataError("no users to evaluate");
  std::map<std::string, PrefecturePrecision> out;
  for (const auto& [user, ranking] : results) {
    const Station& home = idx.at(detail::truth_of(user, truth));
    auto& entry = out[home.prefecture];
    ++entry.users;
    const std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
      const Station& est = idx.at(ranking[i]);
      if (est.prefecture == home.prefecture && haversine_km(est.location, home.location) < d_km) {
        ++entry.correct;
        break;
      }
    }
  }
  for (auto& [pref, entry] : out) {
    const double denominator =
        denom == Denominator::all_users ? static_cast<double>(results.size()) : static_cast<double>(entry.users);
    entry.precision = static_cast<double>(entry.correct) / denominator;
  }
  return out;
}

inline double macro_average(const std::map<std::string, double>& per_pref) {
  if (per_pref.empty()) throw DataError("macro average of no prefectures");
  double s = 0.0;
  for (const auto& [p, v] : per_pref) s += v;
  return s / static_cast<double>(per_pref.size());
}

inline double macro_average(const std::map<std::string, PrefecturePrecision>& per_pref) {
  std::map<std::string, double> flat;
  for (const auto& [p, e] : per_pref) flat.emplace(p, e.precision);
  return macro_average(flat);
}

struct EvalReport {
  std::string method;
  std::size_t users = 0;
  Denominator denominator = Denominator::all_users;
  /// (k, d) -> precision
  std::map<std::pair<std::size_t, double>, double> overall;
  std::size_t pref_k = 1;
  double pref_d = 10.0;
  std::map<std::string, PrefecturePrecision> prefectures;
  double macro = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = method;
    j["users"] = users;
    j["denominator"] = denominator == Denominator::all_users ? "paper" : "per_group";
    auto& ov = j["precision"] = nlohmann::json::array();
    for (const auto& [kd, p] : overall) ov.push_back({{"k", kd.first}, {"d", kd.second}, {"precision", p}});
    j["prefecture_k"] = pref_k;
    j["prefecture_d"] = pref_d;
    auto& pr = j["prefectures"] = nlohmann::json::array();
    for (const auto& [name, e] : prefectures) {
      pr.push_back({{"prefecture", name}, {"users", e.users}, {"precision", e.precision}});
    }
    j["macro_average"] = macro;
    return j;
  }
};

/// d from 10 to 160 km in 10 km steps.
inline std::vector<double> default_distance_sweep() {
  std::vector<double> ds;
  for (int d = 10; d <= 160; d += 10) ds.push_back(d);
  return ds;
}

struct EvalPlan {
  std::vector<std::size_t> ks{1, 3, 5};
  std::vector<double> ds = default_distance_sweep();
  std::size_t pref_k = 1;
  double pref_d = 10.0;
  Denominator denominator = Denominator::all_users;
};

inline EvalReport evaluate(const std::string& method, const EstimationResult& results,
                           const HomeTruth& truth, const StationIndex& idx, const EvalPlan& plan) {
  EvalReport r;
  r.method = method;
  r.users = results.size();
  r.denominator = plan.denominator;
  for (std::size_t k : plan.ks) {
    for (double d : plan.ds) r.overall[{k, d}] = precision_at_k(results, truth, idx, k, d);
  }
  r.pref_k = plan.pref_k;
  r.pref_d = plan.pref_d;
  r.prefectures = precision_by_prefecture(results, truth, idx, plan.pref_k, plan.pref_d, plan.denominator);
  r.macro = macro_average(r.prefectures);
  return r;
}

inline void write_sweep_csv(std::ostream& out, const EvalReport& r) {
  out << "k,d,precision\n";
  for (const auto& [kd, p] : r.overall) {
    out << kd.first << ',' << csv::format_double(kd.second) << ',' << csv::format_double(p) << '\n';
  }
}

inline void write_prefecture_csv(std::ostream& out, const EvalReport& r) {
  out << "prefecture,users,precision\n";
  for (const auto& [name, e] : r.prefectures) {
    out << csv::quote(name) << ',' << e.users << ',' << csv::format_double(e.precision) << '\n';
  }
}

/// Reads estimation JSONL (`user_id`, `ranked: [{station_id, ...}]`).
inline EstimationResult parse_estimates(std::istream& in, std::string* method = nullptr,
                                        const std::string& source = "<estimates>") {
  EstimationResult out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = csv::trim_cr(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(view);
      std::vector<StationId> ranking;
      for (const auto& e : j.at("ranked")) ranking.push_back(e.at("station_id").get<StationId>());
      if (method != nullptr && j.contains("method")) *method = j["method"].get<std::string>();
      if (!out.emplace(j.at("user_id").get<std::string>(), std::move(ranking)).second) {
        throw DataError("duplicate user");
      }
    } catch (const std::exception& e) {
      throw DataError(at_line(source, lineno) + "malformed estimate: " + e.what());
    }
  }
  return out;
}

inline EstimationResult load_estimates(const std::filesystem::path& path, std::string* method = nullptr) {
  auto in = open_input(path);
  return parse_estimates(in, method, path.string());
}

} // namespace wxhome
