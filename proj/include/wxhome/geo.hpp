#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wxhome/error.hpp"

namespace wxhome {

using StationId = std::int64_t;

/// IUGG mean Earth radius.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  static bool valid(double lat, double lon) {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
           lon >= -180.0 && lon <= 180.0;
  }

  /// Checked construction; throws UsageError outside [-90,90] x [-180,180].
  static GeoPoint make(double lat, double lon) {
    if (!valid(lat, lon)) {
      throw UsageError("coordinates out of range: (" + std::to_string(lat) + ", " +
                       std::to_string(lon) + ")");
    }
    return GeoPoint{lat, lon};
  }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline double haversine_km(const GeoPoint& p, const GeoPoint& q) {
  if (p == q) return 0.0;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (q.lat - p.lat) * rad;
  const double dlon = (q.lon - p.lon) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(p.lat * rad) * std::cos(q.lat * rad) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

struct Station {
  StationId id = 0;
  std::string name;
  GeoPoint location;
  std::string prefecture;
};

/// Immutable set of candidate areas, kept sorted by id.
class StationIndex {
public:
  StationIndex() = default;

  explicit StationIndex(std::vector<Station> stations) : stations_(std::move(stations)) {
    std::sort(stations_.begin(), stations_.end(),
              [](const Station& a, const Station& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < stations_.size(); ++i) {
      const Station& s = stations_[i];
      if (s.id < 0) throw DataError("negative station id " + std::to_string(s.id));
      if (s.prefecture.empty()) {
        throw DataError("station " + std::to_string(s.id) + " has empty prefecture");
      }
      if (!GeoPoint::valid(s.location.lat, s.location.lon)) {
        throw DataError("station " + std::to_string(s.id) + " has invalid coordinates");
      }
      if (i > 0 && stations_[i - 1].id == s.id) {
        throw DataError("duplicate station id " + std::to_string(s.id));
      }
    }
  }

  std::size_t size() const { return stations_.size(); }
  bool empty() const { return stations_.empty(); }
  const std::vector<Station>& stations() const { return stations_; }
  auto begin() const { return stations_.begin(); }
  auto end() const { return stations_.end(); }

  const Station* find(StationId id) const {
    auto it = std::lower_bound(stations_.begin(), stations_.end(), id,
                               [](const Station& s, StationId v) { return s.id < v; });
    if (it == stations_.end() || it->id != id) return nullptr;
    return &*it;
  }

  const Station& at(StationId id) const {
    const Station* s = find(id);
    if (s == nullptr) throw DataError("unknown station id " + std::to_string(id));
    return *s;
  }

  bool contains(StationId id) const { return find(id) != nullptr; }

private:
  std::vector<Station> stations_;
};

/// Nearest station strictly closer than `radius_km`; equal distances go to the
/// lowest id (the scan runs in ascending id order and only replaces on `<`).
inline std::optional<StationId> nearest_station_within(const GeoPoint& p, const StationIndex& idx,
                                                       double radius_km) {
  if (!(radius_km > 0.0)) throw UsageError("radius must be positive");
  if (idx.empty()) throw DataError("station index is empty");
  const Station* best = nullptr;
  double best_km = 0.0;
  for (const Station& s : idx) {
    const double km = haversine_km(p, s.location);
    if (best == nullptr || km < best_km) {
      best = &s;
      best_km = km;
    }
  }
  if (best_km < radius_km) return best->id;
  return std::nullopt;
}

inline const std::string& prefecture_of(StationId id, const StationIndex& idx) {
  return idx.at(id).prefecture;
}

inline double station_distance_km(StationId a, StationId b, const StationIndex& idx) {
  return haversine_km(idx.at(a).location, idx.at(b).location);
}

} // namespace wxhome
