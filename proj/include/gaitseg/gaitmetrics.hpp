#pragma once

// Temporal gait features (stride, stance, swing) per walking session.

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gaitseg/event_set.hpp"

namespace gaitseg {

struct GaitCycle {
  double stride;  // IC_k -> IC_k+1, always stance + swing
  double stance;  // IC_k -> FC
  double swing;   // FC -> IC_k+1
};

struct SideCycles {
  std::vector<GaitCycle> cycles;
  int dropped = 0;  // strides without an interior final contact
};

/// Same-side cycles. A stride with no FC strictly between its two ICs is
/// dropped and counted; fewer than two ICs yields no cycles.
SideCycles cycles_from_events(std::span<const double> ic, std::span<const double> fc);

enum class GaitFeature { stride, stance, swing };
enum class GaitMetric { average, variability, asymmetry };

inline constexpr std::array<GaitFeature, 3> kGaitFeatures = {GaitFeature::stride, GaitFeature::stance,
                                                             GaitFeature::swing};
inline constexpr std::array<GaitMetric, 3> kGaitMetrics = {GaitMetric::average, GaitMetric::variability,
                                                           GaitMetric::asymmetry};

std::string_view to_string(GaitFeature f);
std::string_view to_string(GaitMetric m);

/// std::nullopt marks a feature that cannot be computed (distinct from 0).
struct FeatureSummary {
  std::optional<double> average;      // mean over both sides' cycles
  std::optional<double> variability;  // sample SD over both sides, needs >= 2 cycles
  std::optional<double> asymmetry;    // |mean_left - mean_right|, needs both sides

  std::optional<double> get(GaitMetric m) const;
};

struct GaitFeatureSet {
  FeatureSummary stride;
  FeatureSummary stance;
  FeatureSummary swing;
  SideCycles left;
  SideCycles right;

  const FeatureSummary& get(GaitFeature f) const;
};

GaitFeatureSet aggregate(const SideCycles& left, const SideCycles& right);

/// cycles_from_events per side followed by aggregate.
GaitFeatureSet gait_features(const EventSet& events);

struct FeatureError {
  GaitFeature feature;
  GaitMetric metric;
  std::optional<double> error;  // est - ref; empty when either side is unavailable
};

/// One entry per (feature, metric) cell in row-major order.
std::vector<FeatureError> feature_errors(const GaitFeatureSet& est, const GaitFeatureSet& ref);

}  // namespace gaitseg
