#include "gaitseg/gaitmetrics.hpp"

#include <algorithm>
#include <cmath>

namespace gaitseg {

std::string_view to_string(GaitFeature f) {
  switch (f) {
    case GaitFeature::stride: return "stride";
    case GaitFeature::stance: return "stance";
    case GaitFeature::swing: return "swing";
  }
  return "?";
}

std::string_view to_string(GaitMetric m) {
  switch (m) {
    case GaitMetric::average: return "average";
    case GaitMetric::variability: return "variability";
    case GaitMetric::asymmetry: return "asymmetry";
  }
  return "?";
}

std::optional<double> FeatureSummary::get(GaitMetric m) const {
  switch (m) {
    case GaitMetric::average: return average;
    case GaitMetric::variability: return variability;
    case GaitMetric::asymmetry: return asymmetry;
  }
  return std::nullopt;
}

const FeatureSummary& GaitFeatureSet::get(GaitFeature f) const {
  switch (f) {
    case GaitFeature::stride: return stride;
    case GaitFeature::stance: return stance;
    case GaitFeature::swing: break;
  }
  return swing;
}

SideCycles cycles_from_events(std::span<const double> ic, std::span<const double> fc) {
  SideCycles out;
  for (std::size_t k = 0; k + 1 < ic.size(); ++k) {
    const double start = ic[k], end = ic[k + 1];
    const auto it = std::upper_bound(fc.begin(), fc.end(), start);
    if (it == fc.end() || !(*it < end)) {
      ++out.dropped;
      continue;
    }
    const double stance = *it - start;
    const double swing = end - *it;
    out.cycles.push_back({stance + swing, stance, swing});
  }
  return out;
}

namespace {

double field(const GaitCycle& c, GaitFeature f) {
  switch (f) {
    case GaitFeature::stride: return c.stride;
    case GaitFeature::stance: return c.stance;
    case GaitFeature::swing: break;
  }
  return c.swing;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

FeatureSummary summarize(const SideCycles& left, const SideCycles& right, GaitFeature f) {
  std::vector<double> l, r, all;
  for (const auto& c : left.cycles) l.push_back(field(c, f));
  for (const auto& c : right.cycles) r.push_back(field(c, f));
  all = l;
  all.insert(all.end(), r.begin(), r.end());

  FeatureSummary s;
  if (all.empty()) return s;
  const double mean = mean_of(all);
  s.average = mean;
  if (all.size() >= 2) {
    double ss = 0;
    for (double x : all) ss += (x - mean) * (x - mean);
    s.variability = std::sqrt(ss / double(all.size() - 1));
  }
  if (!l.empty() && !r.empty()) s.asymmetry = std::abs(mean_of(l) - mean_of(r));
  return s;
}

}  // namespace

GaitFeatureSet aggregate(const SideCycles& left, const SideCycles& right) {
  GaitFeatureSet g;
  g.stride = summarize(left, right, GaitFeature::stride);
  g.stance = summarize(left, right, GaitFeature::stance);
  g.swing = summarize(left, right, GaitFeature::swing);
  g.left = left;
  g.right = right;
  return g;
}

GaitFeatureSet gait_features(const EventSet& events) {
  return aggregate(cycles_from_events(events.lic, events.lfc),
                   cycles_from_events(events.ric, events.rfc));
}

std::vector<FeatureError> feature_errors(const GaitFeatureSet& est, const GaitFeatureSet& ref) {
  std::vector<FeatureError> out;
  for (GaitFeature f : kGaitFeatures) {
    for (GaitMetric m : kGaitMetrics) {
      const auto e = est.get(f).get(m);
      const auto r = ref.get(f).get(m);
      FeatureError fe{f, m, std::nullopt};
      if (e && r) fe.error = *e - *r;
      out.push_back(fe);
    }
  }
  return out;
}

}  // namespace gaitseg
