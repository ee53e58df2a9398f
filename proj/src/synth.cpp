#include "uavbeam/synth.hpp"

#include <algorithm>
#include <cmath>

#include "uavbeam/errors.hpp"
#include "uavbeam/util.hpp"

namespace uavbeam::synth {

namespace {

constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToDeg = 180.0 / M_PI;
constexpr double kLocalEarthRadiusM = 6371000.0;

// margin keeping generated trajectories strictly inside the served arc
constexpr double kSectorMarginDeg = 1.0;
constexpr double kMinRadiusM = 220.0;
constexpr double kMaxRadiusM = 700.0;

struct LocalEN {
  double east_m = 0.0;
  double north_m = 0.0;
};

LocalEN to_local(const geo::GeodeticPosition& bs, const geo::GeodeticPosition& p) {
  LocalEN v;
  v.north_m = (p.latitude_deg - bs.latitude_deg) * kDegToRad * kLocalEarthRadiusM;
  v.east_m = (p.longitude_deg - bs.longitude_deg) * kDegToRad * kLocalEarthRadiusM *
             std::cos(bs.latitude_deg * kDegToRad);
  return v;
}

double wrap_deg(double a) {
  while (a > 180.0) a -= 360.0;
  while (a <= -180.0) a += 360.0;
  return a;
}

LocalEN polar_to_en(double bearing_deg, double radius_m) {
  return {radius_m * std::sin(bearing_deg * kDegToRad), radius_m * std::cos(bearing_deg * kDegToRad)};
}

}  // namespace

void ScenarioConfig::validate_geometry() const {
  if (codebook_size < 2) throw ValidationError("codebook size must be >= 2");
  if (!(sector_end_deg > sector_start_deg)) {
    throw ValidationError("sector end must exceed sector start");
  }
  if (sector_end_deg - sector_start_deg > 360.0) {
    throw ValidationError("sector arc exceeds a full circle");
  }
  if (power_decay <= 0.0) throw ValidationError("power decay must be positive");
}

void ScenarioConfig::validate() const {
  validate_geometry();
  if (n_sequences < 1 || seq_len < 1) {
    throw ValidationError("need at least one sequence and one sample per sequence");
  }
  if (speed_min_mps <= 0.0 || speed_max_mps < speed_min_mps) {
    throw ValidationError("bad speed range");
  }
  if (height_min_m < 0.0 || height_max_m < height_min_m) {
    throw ValidationError("bad height range");
  }
  if (waypoint_jitter_m < 0.0) throw ValidationError("negative waypoint jitter");
}

geo::GeodeticPosition offset_position(const geo::GeodeticPosition& bs, double east_m,
                                      double north_m, double alt_m) {
  geo::GeodeticPosition p;
  p.latitude_deg = bs.latitude_deg + north_m / kLocalEarthRadiusM * kRadToDeg;
  p.longitude_deg = bs.longitude_deg +
                    east_m / (kLocalEarthRadiusM * std::cos(bs.latitude_deg * kDegToRad)) * kRadToDeg;
  p.altitude_m = alt_m;
  return p;
}

double bearing_from_bs_deg(const geo::GeodeticPosition& bs, const geo::GeodeticPosition& ue) {
  const LocalEN v = to_local(bs, ue);
  if (v.east_m == 0.0 && v.north_m == 0.0) {
    throw ZeroVector("terminal is directly at the base station");
  }
  double b = std::atan2(v.east_m, v.north_m) * kRadToDeg;
  if (b <= -180.0) b += 360.0;
  return b;
}

std::pair<int, std::vector<double>> geometric_beam_oracle(const geo::GeodeticPosition& ue,
                                                          const ScenarioConfig& cfg) {
  cfg.validate_geometry();
  const double theta = bearing_from_bs_deg(cfg.bs_pos, ue);
  // compare in arc-relative coordinates so sectors crossing the +-180 seam work
  const double rel = wrap_deg(theta - cfg.sector_start_deg) < 0.0
                         ? wrap_deg(theta - cfg.sector_start_deg) + 360.0
                         : wrap_deg(theta - cfg.sector_start_deg);
  const double arc = cfg.sector_end_deg - cfg.sector_start_deg;
  if (rel > arc) {
    throw OutOfSector("bearing " + format_double(theta) + " outside served arc [" +
                      format_double(cfg.sector_start_deg) + ", " +
                      format_double(cfg.sector_end_deg) + "]");
  }
  const int m = cfg.codebook_size;
  const double bin = arc / static_cast<double>(m);
  std::vector<double> powers(static_cast<std::size_t>(m));
  int best = 0;
  for (int i = 0; i < m; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * bin;
    const double dist = rel - center;
    powers[static_cast<std::size_t>(i)] = std::exp(-cfg.power_decay * dist * dist);
    if (powers[static_cast<std::size_t>(i)] > powers[static_cast<std::size_t>(best)]) best = i;
  }
  return {best, std::move(powers)};
}

data::RawDataset generate(const ScenarioConfig& cfg) {
  cfg.validate();
  data::RawDataset out;
  out.codebook_size = cfg.codebook_size;
  out.samples.reserve(static_cast<std::size_t>(cfg.n_sequences) *
                      static_cast<std::size_t>(cfg.seq_len));

  const double az_lo = cfg.sector_start_deg + kSectorMarginDeg;
  const double az_hi = cfg.sector_end_deg - kSectorMarginDeg;

  for (int q = 0; q < cfg.n_sequences; ++q) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("sequence"), static_cast<std::uint64_t>(q)));
    const double speed = rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
    const double height = rng.uniform(cfg.height_min_m, cfg.height_max_m);

    // waypoints sweep the arc in one direction, bouncing off the margins
    double az = rng.uniform(az_lo, az_hi);
    double radius = rng.uniform(kMinRadiusM, kMaxRadiusM);
    double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
    std::vector<LocalEN> waypoints;
    const double needed_m = speed * static_cast<double>(cfg.seq_len) + 4.0 * speed;
    double planned_m = 0.0;
    LocalEN prev{};
    bool first = true;
    while (planned_m < needed_m || waypoints.size() < 2) {
      LocalEN wp = polar_to_en(az, radius);
      wp.east_m += rng.normal(0.0, cfg.waypoint_jitter_m);
      wp.north_m += rng.normal(0.0, cfg.waypoint_jitter_m);
      // jitter may nudge the waypoint over the margin; put it back
      double wp_az = std::atan2(wp.east_m, wp.north_m) * kRadToDeg;
      double wp_r = std::hypot(wp.east_m, wp.north_m);
      wp_az = std::clamp(wp_az, az_lo, az_hi);
      wp_r = std::max(wp_r, kMinRadiusM * 0.5);
      wp = polar_to_en(wp_az, wp_r);
      if (!first) {
        planned_m += std::hypot(wp.east_m - prev.east_m, wp.north_m - prev.north_m);
      }
      waypoints.push_back(wp);
      prev = wp;
      first = false;

      az += dir * rng.uniform(8.0, 25.0);
      if (az > az_hi) {
        az = az_hi - (az - az_hi);
        dir = -dir;
      } else if (az < az_lo) {
        az = az_lo + (az_lo - az);
        dir = -dir;
      }
      radius = std::clamp(radius + rng.uniform(-80.0, 80.0), kMinRadiusM, kMaxRadiusM);
    }

    // constant-speed walk along the waypoint polyline, one sample per second
    std::size_t leg = 0;
    LocalEN pos = waypoints[0];
    for (int t = 0; t < cfg.seq_len; ++t) {
      const geo::GeodeticPosition ue = offset_position(cfg.bs_pos, pos.east_m, pos.north_m, height);
      auto [beam, powers] = geometric_beam_oracle(ue, cfg);
      data::RawSample s;
      s.q = q;
      s.t = t;
      s.bs_pos = cfg.bs_pos;
      s.ue_pos = ue;
      s.height_m = height;
      s.beam = beam;
      s.powers = std::move(powers);
      out.samples.push_back(std::move(s));

      double remaining = speed;
      while (remaining > 0.0 && leg + 1 < waypoints.size()) {
        const LocalEN& target = waypoints[leg + 1];
        const double dx = target.east_m - pos.east_m;
        const double dy = target.north_m - pos.north_m;
        const double dist = std::hypot(dx, dy);
        if (dist <= remaining) {
          pos = target;
          remaining -= dist;
          ++leg;
        } else {
          pos.east_m += dx / dist * remaining;
          pos.north_m += dy / dist * remaining;
          remaining = 0.0;
        }
      }
    }
  }
  return out;
}

}  // namespace uavbeam::synth
