#pragma once

// Training targets, likelihood decoding, event matching and error statistics.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "gaitseg/event_set.hpp"
#include "gaitseg/numcore.hpp"

namespace gaitseg {

inline constexpr double kDefaultTargetSigma = 2.0;  // samples

struct TargetSignal {
  Signal2D data;  // [4 x N], rows in EventClass order
  double sigma = kDefaultTargetSigma;
};

struct PeakParams {
  double threshold = 0.5;
  double min_distance = 0.25;  // seconds
};

struct MatchedPair {
  double ref_time;
  double est_time;
  double error;  // est - ref, seconds
};

struct MatchResult {
  std::vector<MatchedPair> matched;
  std::vector<double> false_positives;
  std::vector<double> false_negatives;
  double window = 0.5;
};

/// Median / spread of signed time errors. All fields are NaN when n == 0.
struct ErrorStats {
  double bias;
  double iqr;
  double q1;
  double q3;
  double p5;
  double p95;
  std::size_t n = 0;
};

/// Gaussian bumps of width `sigma` samples centred on each quantized event,
/// max-combined per class.
TargetSignal make_targets(const EventSet& events, Index n_samples, double sample_rate,
                          double sigma = kDefaultTargetSigma);

/// Local maxima (plateaus report their floor midpoint) with value >= threshold.
struct PeakCandidate {
  Index index;
  double height;
};
std::vector<PeakCandidate> peak_candidates(std::span<const double> trace, double threshold);

/// Sample indices of the decoded peaks. Among all candidate subsets whose
/// members are pairwise at least min_distance apart, returns the one with the
/// most peaks, then the largest total height, then the earliest positions.
std::vector<Index> detect_peak_indices(std::span<const double> trace, const PeakParams& params,
                                       double sample_rate);

std::vector<double> detect_peaks(std::span<const double> trace, const PeakParams& params,
                                 double sample_rate);

/// Decodes all four likelihood rows.
EventSet decode_events(const Signal2D& likelihoods, const PeakParams& params, double sample_rate);

/// Greedy globally-closest one-to-one matching within `window` seconds. Both
/// lists must be sorted (ties allowed, e.g. merged left/right events).
MatchResult match_events(std::span<const double> ref, std::span<const double> est,
                         double window = 0.5);

/// Linear interpolation between order statistics (h = (n-1)p).
double quantile_sorted(std::span<const double> sorted, double p);

ErrorStats error_stats(std::span<const double> errors);

std::vector<double> signed_errors(const MatchResult& m);

}  // namespace gaitseg
