#include "uavbeam/geo.hpp"

#include <cmath>

#include "uavbeam/errors.hpp"

namespace uavbeam::geo {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
constexpr double kMinSeparationKm = 1e-12;
}  // namespace

double EcefVector::norm_km() const { return std::sqrt(x_km * x_km + y_km * y_km + z_km * z_km); }

NormalizationBounds fit_bounds(std::span<const GeodeticPosition> positions) {
  if (positions.size() < 2) {
    throw DegenerateBounds("need at least two positions to fit bounds, got " +
                           std::to_string(positions.size()));
  }
  NormalizationBounds b{positions[0].latitude_deg, positions[0].latitude_deg,
                        positions[0].longitude_deg, positions[0].longitude_deg};
  for (const auto& p : positions) {
    b.lat_min = std::min(b.lat_min, p.latitude_deg);
    b.lat_max = std::max(b.lat_max, p.latitude_deg);
    b.lon_min = std::min(b.lon_min, p.longitude_deg);
    b.lon_max = std::max(b.lon_max, p.longitude_deg);
  }
  if (b.lat_min == b.lat_max) {
    throw DegenerateBounds("latitude spread is zero");
  }
  if (b.lon_min == b.lon_max) {
    throw DegenerateBounds("longitude spread is zero");
  }
  return b;
}

std::pair<double, double> normalize(const GeodeticPosition& p, const NormalizationBounds& b) {
  const double lat = (p.latitude_deg - b.lat_min) / (b.lat_max - b.lat_min);
  const double lon = (p.longitude_deg - b.lon_min) / (b.lon_max - b.lon_min);
  return {lat, lon};
}

EcefVector geodetic_to_ecef(const GeodeticPosition& p) {
  const double phi = p.latitude_deg * kDegToRad;
  const double lam = p.longitude_deg * kDegToRad;
  const double alt_km = p.altitude_m / 1000.0;
  const double sin_phi = std::sin(phi);
  const double cos_phi = std::cos(phi);
  // prime vertical radius of curvature
  const double r = kEquatorialRadiusKm / std::sqrt(1.0 - kEccentricitySquared * sin_phi * sin_phi);
  EcefVector v;
  v.x_km = (r + alt_km) * cos_phi * std::cos(lam);
  v.y_km = (r + alt_km) * cos_phi * std::sin(lam);
  v.z_km = (r + alt_km - kEccentricitySquared * r) * sin_phi;
  return v;
}

std::array<double, 3> ue_bs_unit_vector(const GeodeticPosition& ue, const GeodeticPosition& bs) {
  const EcefVector a = geodetic_to_ecef(ue);
  const EcefVector b = geodetic_to_ecef(bs);
  const double dx = a.x_km - b.x_km;
  const double dy = a.y_km - b.y_km;
  const double dz = a.z_km - b.z_km;
  const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (norm < kMinSeparationKm) {
    throw ZeroVector("terminal and base station coincide, separation " + std::to_string(norm) +
                     " km");
  }
  return {dx / norm, dy / norm, dz / norm};
}

FeatureVector make_feature(const GeodeticPosition& ue, const GeodeticPosition& bs,
                           const NormalizationBounds& bounds) {
  FeatureVector f;
  auto [lat, lon] = normalize(ue, bounds);
  f.lat_norm = lat;
  f.lon_norm = lon;
  const auto u = ue_bs_unit_vector(ue, bs);
  f.ux = u[0];
  f.uy = u[1];
  f.uz = u[2];
  return f;
}

}  // namespace uavbeam::geo
