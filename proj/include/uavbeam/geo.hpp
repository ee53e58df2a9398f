#pragma once

#include <array>
#include <span>
#include <utility>

namespace uavbeam::geo {

// WGS-84 ellipsoid. Kilometers internally; altitudes arrive in meters.
inline constexpr double kEquatorialRadiusKm = 6378.137;
inline constexpr double kEccentricitySquared = 0.00669437999;

struct GeodeticPosition {
  double latitude_deg = 0.0;   // [-90, 90]
  double longitude_deg = 0.0;  // [-180, 180]
  double altitude_m = 0.0;     // height above the ellipsoid, >= 0
};

struct EcefVector {
  double x_km = 0.0;
  double y_km = 0.0;
  double z_km = 0.0;
  double norm_km() const;
};

// Min/max latitude and longitude seen when fitting, degrees.
struct NormalizationBounds {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
};

// The fixed five-element input layout: normalized latitude, normalized
// longitude, then the unit vector from base station to terminal.
inline constexpr int kFeatureDim = 5;

struct FeatureVector {
  double lat_norm = 0.0;
  double lon_norm = 0.0;
  double ux = 0.0;
  double uy = 0.0;
  double uz = 0.0;
  std::array<double, kFeatureDim> as_array() const { return {lat_norm, lon_norm, ux, uy, uz}; }
};

// Scans positions for per-axis extrema. Throws DegenerateBounds when fewer
// than two positions are given or when an axis has zero spread.
NormalizationBounds fit_bounds(std::span<const GeodeticPosition> positions);

// Min-max scaling of latitude and longitude. Values outside the fitted
// bounds map outside [0,1]; no clamping on purpose.
std::pair<double, double> normalize(const GeodeticPosition& p, const NormalizationBounds& b);

EcefVector geodetic_to_ecef(const GeodeticPosition& p);

// Unit direction from the base station towards the terminal, in the ECEF
// frame. Throws ZeroVector when the two points coincide (norm below 1e-12 km).
std::array<double, 3> ue_bs_unit_vector(const GeodeticPosition& ue, const GeodeticPosition& bs);

FeatureVector make_feature(const GeodeticPosition& ue, const GeodeticPosition& bs,
                           const NormalizationBounds& bounds);

}  // namespace uavbeam::geo
