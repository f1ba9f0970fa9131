#include "gaitseg/events.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "gaitseg/errors.hpp"
#include "gaitseg/ingest.hpp"

namespace gaitseg {

std::string_view event_key(EventClass c) {
  switch (c) {
    case EventClass::right_ic: return "ric";
    case EventClass::right_fc: return "rfc";
    case EventClass::left_ic: return "lic";
    case EventClass::left_fc: return "lfc";
  }
  return "?";
}

bool is_initial_contact(EventClass c) {
  return c == EventClass::right_ic || c == EventClass::left_ic;
}

std::vector<double>& EventSet::operator[](EventClass c) {
  switch (c) {
    case EventClass::right_ic: return ric;
    case EventClass::right_fc: return rfc;
    case EventClass::left_ic: return lic;
    case EventClass::left_fc: break;
  }
  return lfc;
}

const std::vector<double>& EventSet::operator[](EventClass c) const {
  return const_cast<EventSet&>(*this)[c];
}

std::vector<double> EventSet::merged(bool initial_contacts) const {
  std::vector<double> out = initial_contacts ? lic : lfc;
  const auto& other = initial_contacts ? ric : rfc;
  out.insert(out.end(), other.begin(), other.end());
  std::sort(out.begin(), out.end());
  return out;
}

void EventSet::validate(double min_separation) const {
  for (EventClass c : kEventClasses) {
    const auto& times = (*this)[c];
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::isfinite(times[i]))
        throw DataError("event list '" + std::string(event_key(c)) + "' has a non-finite time");
      if (i > 0 && !(times[i] - times[i - 1] >= min_separation))
        throw DataError("event list '" + std::string(event_key(c)) + "' is not increasing by at least " +
                        std::to_string(min_separation) + " s at index " + std::to_string(i));
    }
  }
}

TargetSignal make_targets(const EventSet& events, Index n_samples, double sample_rate,
                          double sigma) {
  if (n_samples < 1 || !(sample_rate > 0) || !(sigma > 0))
    throw ContractError("make_targets: need n_samples >= 1, sample_rate > 0, sigma > 0");
  const double duration = double(n_samples) / sample_rate;
  TargetSignal target;
  target.sigma = sigma;
  target.data = Signal2D::Zero(4, n_samples);
  const Index reach = Index(std::ceil(sigma * 10));
  for (EventClass c : kEventClasses) {
    const auto& times = events[c];
    for (double t : times) {
      if (!(t >= 0 && t <= duration))
        throw ContractError("make_targets: event at " + std::to_string(t) +
                            " s lies outside [0, " + std::to_string(duration) + "]");
    }
    const auto idx = events_to_samples(times, sample_rate);
    auto row = target.data.row(int(c));
    for (Index e : idx) {
      e = std::min(e, n_samples - 1);
      const Index lo = std::max<Index>(0, e - reach), hi = std::min(n_samples - 1, e + reach);
      for (Index t = lo; t <= hi; ++t) {
        const double d = double(t - e);
        row(t) = std::max(row(t), std::exp(-d * d / (2 * sigma * sigma)));
      }
    }
  }
  return target;
}

std::vector<PeakCandidate> peak_candidates(std::span<const double> trace, double threshold) {
  std::vector<PeakCandidate> out;
  const Index n = Index(trace.size());
  constexpr double kLow = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && trace[j + 1] == trace[i]) ++j;
    const double v = trace[i];
    const double left = i > 0 ? trace[i - 1] : kLow;
    const double right = j + 1 < n ? trace[j + 1] : kLow;
    const bool whole_trace = i == 0 && j == n - 1;
    if (!whole_trace && left < v && right < v && v >= threshold) out.push_back({(i + j) / 2, v});
    i = j + 1;
  }
  return out;
}

std::vector<Index> detect_peak_indices(std::span<const double> trace, const PeakParams& params,
                                       double sample_rate) {
  if (!(params.min_distance > 0)) throw ConfigError("peak min_distance must be positive");
  const auto cand = peak_candidates(trace, params.threshold);
  const std::size_t n = cand.size();
  const double min_gap = params.min_distance * sample_rate;

  // best[i]: optimal selection among candidates i..n-1, built right to left.
  struct Best {
    std::size_t count = 0;
    double height = 0;
    bool take = false;
    std::size_t next = 0;
  };
  std::vector<Best> best(n + 1);
  std::size_t first = n;  // first candidate after i that is far enough away
  for (std::size_t i = n; i-- > 0;) {
    while (first > i + 1 && double(cand[first - 1].index - cand[i].index) >= min_gap) --first;
    const Best& skip = best[i + 1];
    const std::size_t take_count = 1 + best[first].count;
    const double take_height = cand[i].height + best[first].height;
    Best& b = best[i];
    if (take_count > skip.count || (take_count == skip.count && take_height >= skip.height)) {
      b = {take_count, take_height, true, first};
    } else {
      b = skip;
      b.take = false;
      b.next = i + 1;
    }
  }

  std::vector<Index> out;
  for (std::size_t i = 0; i < n;) {
    if (best[i].take) {
      out.push_back(cand[i].index);
      i = best[i].next;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<double> detect_peaks(std::span<const double> trace, const PeakParams& params,
                                 double sample_rate) {
  std::vector<double> times;
  for (Index i : detect_peak_indices(trace, params, sample_rate))
    times.push_back(double(i) / sample_rate);
  return times;
}

EventSet decode_events(const Signal2D& likelihoods, const PeakParams& params, double sample_rate) {
  if (likelihoods.rows() != 4)
    throw ContractError("decode_events: expected 4 likelihood rows, got " +
                        std::to_string(likelihoods.rows()));
  EventSet events;
  std::vector<double> row(likelihoods.cols());
  for (EventClass c : kEventClasses) {
    for (Index t = 0; t < likelihoods.cols(); ++t) row[t] = likelihoods(int(c), t);
    events[c] = detect_peaks(row, params, sample_rate);
  }
  return events;
}

namespace {

void require_increasing(std::span<const double> v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] >= v[i - 1]))
      throw ContractError(std::string("match_events: ") + what +
                          " times decrease at index " + std::to_string(i));
}

}  // namespace

MatchResult match_events(std::span<const double> ref, std::span<const double> est,
                         double window) {
  require_increasing(ref, "reference");
  require_increasing(est, "estimated");
  if (!(window > 0)) throw ConfigError("match window must be positive");

  struct Pair {
    double dist, lo, hi;
    std::size_t r, e;
  };
  std::vector<Pair> pairs;
  std::size_t start = 0;
  for (std::size_t r = 0; r < ref.size(); ++r) {
    while (start < est.size() && est[start] < ref[r] - window) ++start;
    for (std::size_t e = start; e < est.size() && est[e] <= ref[r] + window; ++e) {
      const double d = std::abs(est[e] - ref[r]);
      if (d <= window) pairs.push_back({d, std::min(ref[r], est[e]), std::max(ref[r], est[e]), r, e});
    }
  }
  // Tie-break on the (min, max) time pair so swapping roles mirrors the result.
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.dist, a.lo, a.hi) < std::tie(b.dist, b.lo, b.hi);
  });

  std::vector<bool> ref_used(ref.size()), est_used(est.size());
  MatchResult m;
  m.window = window;
  for (const Pair& p : pairs) {
    if (ref_used[p.r] || est_used[p.e]) continue;
    ref_used[p.r] = est_used[p.e] = true;
    m.matched.push_back({ref[p.r], est[p.e], est[p.e] - ref[p.r]});
  }
  std::sort(m.matched.begin(), m.matched.end(),
            [](const MatchedPair& a, const MatchedPair& b) { return a.ref_time < b.ref_time; });
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (!ref_used[i]) m.false_negatives.push_back(ref[i]);
  for (std::size_t i = 0; i < est.size(); ++i)
    if (!est_used[i]) m.false_positives.push_back(est[i]);
  return m;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = double(sorted.size() - 1) * p;
  const auto lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

ErrorStats error_stats(std::span<const double> errors) {
  std::vector<double> s(errors.begin(), errors.end());
  std::sort(s.begin(), s.end());
  ErrorStats st;
  st.n = s.size();
  st.bias = quantile_sorted(s, 0.5);
  st.q1 = quantile_sorted(s, 0.25);
  st.q3 = quantile_sorted(s, 0.75);
  st.iqr = st.q3 - st.q1;
  st.p5 = quantile_sorted(s, 0.05);
  st.p95 = quantile_sorted(s, 0.95);
  return st;
}

std::vector<double> signed_errors(const MatchResult& m) {
  std::vector<double> e;
  e.reserve(m.matched.size());
  for (const auto& p : m.matched) e.push_back(p.error);
  return e;
}

}  // namespace gaitseg
