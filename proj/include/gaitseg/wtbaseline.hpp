#pragma once

// Wavelet-transform event detection from the L5 vertical acceleration: the
// comparator for the network.

#include <optional>
#include <span>
#include <vector>

#include "gaitseg/event_set.hpp"
#include "gaitseg/ingest.hpp"

namespace gaitseg {

struct WtParams {
  double cwt_scale = 16.0;  // samples
  bool integrate_first = true;
};

/// Initial and final contacts without side labels, in seconds.
struct WtEvents {
  std::vector<double> ic;
  std::vector<double> fc;
};

enum class Side { left, right };

/// Single-scale continuous wavelet transform with the first derivative of a
/// Gaussian. Oriented so that an increasing input gives a positive response;
/// the edges are mirror-padded.
std::vector<double> gaussian_derivative_cwt(std::span<const double> x, double scale);

/// Interior strict local extrema (plateaus report their floor midpoint).
std::vector<Index> local_minima(std::span<const double> x);
std::vector<Index> local_maxima(std::span<const double> x);

/// mean removal -> cumulative integration -> CWT: initial contacts are the
/// minima of the first CWT output, final contacts the maxima of a second CWT
/// applied to it.
WtEvents wt_detect(std::span<const double> vertical_accel, double sample_rate,
                   const WtParams& params = {});

struct SideLabels {
  EventSet events;
  bool sides_known = false;  // false: labels alternate from an arbitrary start
};

/// Alternates sides through each event list starting from the given sides.
EventSet alternate_sides(const WtEvents& events, Side first_ic, Side first_fc);

/// Uses the mediolateral ankle gyro of a projected trial, when present, to
/// pick the starting side: the foot that swings right before the first
/// initial contact, and right after the first final contact.
SideLabels side_assign(const WtEvents& events, const ImuTrial* projected = nullptr);

/// Full baseline on a projected trial: detection on L5 acc_z, then sides.
SideLabels wt_baseline(const ImuTrial& projected, const WtParams& params = {});

}  // namespace gaitseg
