#include "gaitseg/wtbaseline.hpp"

#include <cmath>
#include <numeric>

#include "gaitseg/errors.hpp"

namespace gaitseg {

std::vector<double> gaussian_derivative_cwt(std::span<const double> x, double scale) {
  if (!(scale > 0)) throw ConfigError("cwt scale must be positive");
  const Index n = Index(x.size());
  const Index reach = Index(std::ceil(4 * scale));
  std::vector<double> kernel(std::size_t(2 * reach + 1));
  const double norm = 1.0 / std::sqrt(scale);
  for (Index k = -reach; k <= reach; ++k) {
    const double u = double(k) / scale;
    kernel[std::size_t(k + reach)] = norm * u * std::exp(-0.5 * u * u);
  }
  auto at = [&](Index i) {
    // Half-sample symmetric reflection, repeated for very short inputs.
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return x[std::size_t(i)];
  };
  std::vector<double> out(x.size());
  for (Index t = 0; t < n; ++t) {
    double s = 0;
    for (Index k = -reach; k <= reach; ++k) s += at(t + k) * kernel[std::size_t(k + reach)];
    out[std::size_t(t)] = s;
  }
  return out;
}

namespace {

template <typename Less>
std::vector<Index> interior_extrema(std::span<const double> x, Less better) {
  std::vector<Index> out;
  const Index n = Index(x.size());
  for (Index i = 1; i < n;) {
    Index j = i;
    while (j + 1 < n && x[j + 1] == x[i]) ++j;
    if (j + 1 < n && better(x[i], x[i - 1]) && better(x[i], x[j + 1])) out.push_back((i + j) / 2);
    i = j + 1;
  }
  return out;
}

std::vector<double> to_times(const std::vector<Index>& idx, double rate) {
  std::vector<double> t;
  t.reserve(idx.size());
  for (Index i : idx) t.push_back(double(i) / rate);
  return t;
}

}  // namespace

std::vector<Index> local_minima(std::span<const double> x) {
  return interior_extrema(x, [](double a, double b) { return a < b; });
}

std::vector<Index> local_maxima(std::span<const double> x) {
  return interior_extrema(x, [](double a, double b) { return a > b; });
}

WtEvents wt_detect(std::span<const double> vertical_accel, double sample_rate,
                   const WtParams& params) {
  if (!(params.cwt_scale > 0)) throw ConfigError("cwt_scale must be positive");
  if (!(sample_rate > 0)) throw ContractError("wt_detect: sample_rate must be positive");
  if (double(vertical_accel.size()) < 4 * params.cwt_scale)
    throw DataError("wt_detect: " + std::to_string(vertical_accel.size()) +
                    " samples is too short for cwt scale " + std::to_string(params.cwt_scale));
  for (double v : vertical_accel)
    if (!std::isfinite(v)) throw DataError("wt_detect: non-finite input sample");

  std::vector<double> signal(vertical_accel.begin(), vertical_accel.end());
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / double(signal.size());
  for (double& v : signal) v -= mean;
  if (params.integrate_first) {
    double acc = 0;
    for (double& v : signal) {
      acc += v / sample_rate;
      v = acc;
    }
  }
  const auto first = gaussian_derivative_cwt(signal, params.cwt_scale);
  const auto second = gaussian_derivative_cwt(first, params.cwt_scale);

  WtEvents ev;
  ev.ic = to_times(local_minima(first), sample_rate);
  ev.fc = to_times(local_maxima(second), sample_rate);
  return ev;
}

EventSet alternate_sides(const WtEvents& events, Side first_ic, Side first_fc) {
  EventSet out;
  auto deal = [](const std::vector<double>& times, Side first, std::vector<double>& left,
                 std::vector<double>& right) {
    Side side = first;
    for (double t : times) {
      (side == Side::left ? left : right).push_back(t);
      side = side == Side::left ? Side::right : Side::left;
    }
  };
  deal(events.ic, first_ic, out.lic, out.ric);
  deal(events.fc, first_fc, out.lfc, out.rfc);
  return out;
}

namespace {

constexpr double kSwingWindow = 0.4;  // seconds

// Most negative mediolateral angular velocity of one ankle over [t0, t1).
double swing_depth(const ImuTrial& trial, SensorLocation ankle, double t0, double t1) {
  const auto& gyro = trial.sensor(ankle).gyro;
  const Index a = std::max<Index>(0, Index(std::floor(t0 * trial.sample_rate)));
  const Index b = std::min<Index>(trial.n_samples(), Index(std::ceil(t1 * trial.sample_rate)));
  double lo = 0;
  for (Index i = a; i < b; ++i) lo = std::min(lo, gyro(1, i));
  return lo;
}

Side swinging_side(const ImuTrial& trial, double t0, double t1) {
  return swing_depth(trial, SensorLocation::left_ankle, t0, t1) <=
                 swing_depth(trial, SensorLocation::right_ankle, t0, t1)
             ? Side::left
             : Side::right;
}

}  // namespace

SideLabels side_assign(const WtEvents& events, const ImuTrial* projected) {
  SideLabels out;
  const bool ankles = projected && projected->frame == Frame::anatomical &&
                      projected->has(SensorLocation::left_ankle) &&
                      projected->has(SensorLocation::right_ankle);
  Side first_ic = Side::left, first_fc = Side::left;
  if (ankles) {
    if (!events.ic.empty())
      first_ic = swinging_side(*projected, events.ic.front() - kSwingWindow, events.ic.front());
    if (!events.fc.empty())
      first_fc = swinging_side(*projected, events.fc.front(), events.fc.front() + kSwingWindow);
  }
  out.events = alternate_sides(events, first_ic, first_fc);
  out.sides_known = ankles;
  return out;
}

SideLabels wt_baseline(const ImuTrial& projected, const WtParams& params) {
  if (projected.frame != Frame::anatomical)
    throw ContractError("wt_baseline: trial " + projected.trial_id + " must be projected first");
  const auto& l5 = projected.sensor(SensorLocation::L5);
  std::vector<double> vertical(std::size_t(l5.size()));
  for (Index t = 0; t < l5.size(); ++t) vertical[std::size_t(t)] = l5.accel(2, t);
  return side_assign(wt_detect(vertical, projected.sample_rate, params), &projected);
}

}  // namespace gaitseg
