#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "uavbeam/data.hpp"
#include "uavbeam/geo.hpp"

namespace uavbeam::synth {

// Desk-scale scenario: one base station serving an azimuth sector with an
// M-beam codebook, overflown by waypoint-following aerial terminals.
struct ScenarioConfig {
  geo::GeodeticPosition bs_pos{33.0, -112.0, 0.0};
  int codebook_size = 32;
  double sector_start_deg = -60.0;  // compass bearing, clockwise from north
  double sector_end_deg = 60.0;
  int n_sequences = 0;
  int seq_len = 0;                  // samples per sequence, 1 Hz
  double speed_min_mps = 4.0;
  double speed_max_mps = 10.0;
  double height_min_m = 40.0;
  double height_max_m = 120.0;
  double waypoint_jitter_m = 2.0;   // gaussian noise on waypoint placement
  double power_decay = 0.02;        // gaussian beam pattern falloff, per deg^2
  std::uint64_t seed = 0;

  void validate() const;           // throws ValidationError
  void validate_geometry() const;  // the subset the beam oracle relies on
};

// Compass bearing from the base station to the terminal in degrees,
// (-180, 180], measured clockwise from north on the local tangent plane.
double bearing_from_bs_deg(const geo::GeodeticPosition& bs, const geo::GeodeticPosition& ue);

// Places a point east_m/north_m meters from the base station.
geo::GeodeticPosition offset_position(const geo::GeodeticPosition& bs, double east_m,
                                      double north_m, double alt_m);

// Quantizes the bearing into the codebook grid and synthesizes the per-beam
// receive power profile. The returned beam always equals the power argmax.
// Throws OutOfSector for terminals outside the served arc.
std::pair<int, std::vector<double>> geometric_beam_oracle(const geo::GeodeticPosition& ue,
                                                          const ScenarioConfig& cfg);

// Deterministic per seed. Each sequence consumes its own derived RNG stream.
data::RawDataset generate(const ScenarioConfig& cfg);

}  // namespace uavbeam::synth
