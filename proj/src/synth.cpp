#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"

namespace gaitseg {

void SubjectProfile::validate() const {
  auto bad = [&](const std::string& what) {
    throw ConfigError("subject " + subject_id + ": " + what);
  };
  if (!(cadence >= 0.5 && cadence <= 1.5)) bad("cadence must lie in [0.5, 1.5] strides/s");
  if (!(stance_fraction > 0.4 && stance_fraction < 0.8)) bad("stance fraction must lie in (0.4, 0.8)");
  if (!(noise >= 0)) bad("noise must be >= 0");
  if (!(jitter >= 0 && jitter <= 0.1)) bad("jitter must lie in [0, 0.1] s");
  if (!(asymmetry >= 0 && asymmetry <= 0.2)) bad("asymmetry must lie in [0, 0.2]");
  if (!(amplitude > 0)) bad("amplitude must be positive");
}

void SynthSpec::validate() const {
  if (n_subjects < 1 && subjects.empty()) throw ConfigError("synth: n_subjects must be >= 1");
  if (trials_per_subject < 1) throw ConfigError("synth: trials_per_subject must be >= 1");
  if (!(pd_fraction >= 0 && pd_fraction <= 1)) throw ConfigError("synth: pd_fraction must lie in [0, 1]");
  if (!(sample_rate >= 16)) throw ConfigError("synth: sample_rate must be >= 16 Hz");
  if (!(noise >= 0)) throw ConfigError("synth: noise must be >= 0");
  if (!(jitter_scale >= 0)) throw ConfigError("synth: jitter_scale must be >= 0");
  if (!(iw_duration >= 6)) throw ConfigError("synth: iw_duration must be >= 6 s");
  if (!(cw_duration >= 4)) throw ConfigError("synth: cw_duration must be >= 4 s");
  for (const auto& s : subjects) s.validate();
}

SynthSpec SynthSpec::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
  SynthSpec s;
  try {
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.trials_per_subject = j.value("trials_per_subject", s.trials_per_subject);
    s.pd_fraction = j.value("pd_fraction", s.pd_fraction);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.noise = j.value("noise", s.noise);
    s.jitter_scale = j.value("jitter_scale", s.jitter_scale);
    s.iw_duration = j.value("iw_duration", s.iw_duration);
    s.cw_duration = j.value("cw_duration", s.cw_duration);
    s.seed = j.value("seed", s.seed);
    if (j.contains("subjects")) {
      for (const auto& p : j.at("subjects")) {
        SubjectProfile sp;
        sp.subject_id = p.at("subject_id").get<std::string>();
        sp.group = parse_group(p.value("group", std::string("HC")));
        sp.cadence = p.value("cadence", sp.cadence);
        sp.stance_fraction = p.value("stance_fraction", sp.stance_fraction);
        sp.asymmetry = p.value("asymmetry", sp.asymmetry);
        sp.jitter = p.value("jitter", sp.jitter);
        sp.amplitude = p.value("amplitude", sp.amplitude);
        sp.noise = p.value("noise", s.noise);
        s.subjects.push_back(sp);
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

Json SynthSpec::to_json() const {
  Json j = {{"n_subjects", n_subjects},   {"trials_per_subject", trials_per_subject},
            {"pd_fraction", pd_fraction}, {"sample_rate", sample_rate},
            {"noise", noise},             {"jitter_scale", jitter_scale},
            {"iw_duration", iw_duration}, {"cw_duration", cw_duration},
            {"seed", seed}};
  if (!subjects.empty()) {
    Json arr = Json::array();
    for (const auto& p : subjects)
      arr.push_back({{"subject_id", p.subject_id},
                     {"group", std::string(to_string(p.group))},
                     {"cadence", p.cadence},
                     {"stance_fraction", p.stance_fraction},
                     {"asymmetry", p.asymmetry},
                     {"jitter", p.jitter},
                     {"amplitude", p.amplitude},
                     {"noise", p.noise}});
    j["subjects"] = arr;
  }
  return j;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Standard normal truncated to +-3.
double tnormal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double z;
  do z = n(rng);
  while (std::abs(z) > 3);
  return z;
}

}  // namespace

std::vector<SubjectProfile> synth_subjects(const SynthSpec& spec) {
  spec.validate();
  if (!spec.subjects.empty()) return spec.subjects;
  std::mt19937_64 rng(mix(spec.seed, 0x5b1ec7));
  std::vector<SubjectProfile> out;
  for (int i = 0; i < spec.n_subjects; ++i) {
    SubjectProfile p;
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", i + 1);
    p.subject_id = id;
    // Spread PD subjects evenly through the list.
    const bool pd = std::floor(double(i + 1) * spec.pd_fraction) > std::floor(double(i) * spec.pd_fraction);
    p.group = pd ? Group::PD : Group::HC;
    if (pd) {
      p.cadence = uniform(rng, 0.72, 0.92);
      p.stance_fraction = uniform(rng, 0.60, 0.68);
      p.asymmetry = uniform(rng, 0.02, 0.05);
      p.jitter = uniform(rng, 0.02, 0.035);
      p.amplitude = uniform(rng, 0.6, 0.9);
    } else {
      p.cadence = uniform(rng, 0.85, 1.05);
      p.stance_fraction = uniform(rng, 0.58, 0.64);
      p.asymmetry = uniform(rng, 0.0, 0.015);
      p.jitter = uniform(rng, 0.008, 0.015);
      p.amplitude = uniform(rng, 0.9, 1.1);
    }
    p.jitter *= spec.jitter_scale;
    p.noise = spec.noise;
    out.push_back(p);
  }
  return out;
}

namespace {

struct Swing {
  double fc;
  double ic;
};

// Swings (final contact -> next initial contact) of one foot.
struct FootTimeline {
  std::vector<Swing> swings;
};

double gauss(double x, double width) { return std::exp(-0.5 * (x / width) * (x / width)); }

class Canvas {
 public:
  Canvas(Index n, double rate) : rate_(rate), n_(n) {}

  // Adds f(t) to every sample with t in [t0, t1].
  template <typename F>
  void add(double t0, double t1, F&& f) const {
    const Index a = std::max<Index>(0, Index(std::ceil(t0 * rate_)));
    const Index b = std::min<Index>(n_ - 1, Index(std::floor(t1 * rate_)));
    for (Index i = a; i <= b; ++i) f(i, double(i) / rate_);
  }

 private:
  double rate_;
  Index n_;
};

// One side's gait: left initial contacts every stride, right shifted by a
// phase fraction, final contacts at the stance fraction of each stride.
struct CycleDraw {
  std::vector<double> ic;
  std::vector<double> fc;  // fc[k] lies in (ic[k], ic[k+1])
};

CycleDraw draw_cycles(const std::vector<double>& ref_ic, double phase, double stance,
                      double ic_jitter, double fc_jitter, std::mt19937_64& rng) {
  CycleDraw d;
  const std::size_t n = ref_ic.size();
  d.ic.resize(n);
  for (std::size_t k = 0; k + 1 < n; ++k)
    d.ic[k] = ref_ic[k] + phase * (ref_ic[k + 1] - ref_ic[k]) + ic_jitter * tnormal(rng);
  d.ic[n - 1] = ref_ic[n - 1] + phase * (ref_ic[n - 1] - ref_ic[n - 2]);
  for (std::size_t k = 1; k < n; ++k) d.ic[k] = std::max(d.ic[k], d.ic[k - 1] + 0.3);
  d.fc.resize(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double span = d.ic[k + 1] - d.ic[k];
    const double fc = d.ic[k] + stance * span + fc_jitter * tnormal(rng);
    d.fc[k] = std::clamp(fc, d.ic[k] + 0.35 * span, d.ic[k + 1] - 0.2 * span);
  }
  return d;
}

Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

}  // namespace

ImuTrial synth_trial(const SubjectProfile& subject, Condition condition, double duration,
                     double sample_rate, std::uint64_t seed, const std::string& trial_id) {
  subject.validate();
  if (!(sample_rate > 0) || !(duration > 0)) throw ConfigError("synth_trial: bad duration or rate");
  std::mt19937_64 rng(mix(seed, 0x7121a1));

  const Index n = Index(std::floor(duration * sample_rate));
  const double t_last = double(n - 1) / sample_rate;
  const double stride = 1.0 / subject.cadence;
  const bool iw = condition == Condition::IW;
  const double walk_start = iw ? 1.0 : -3 * stride;
  const double walk_end = iw ? t_last - 1.0 : t_last + 3 * stride;

  // Left initial contacts: the first left final contact falls on walk_start.
  const double stance_l = subject.stance_fraction * (1 + 0.5 * subject.asymmetry);
  const double stance_r = subject.stance_fraction * (1 - 0.5 * subject.asymmetry);
  std::vector<double> left_ic;
  double t = iw ? walk_start - stance_l * stride : walk_start - uniform(rng, 0, stride);
  left_ic.push_back(t);
  while (t < walk_end + 2 * stride) {
    t += std::max(0.5 * stride, stride + subject.jitter * tnormal(rng));
    left_ic.push_back(t);
  }
  CycleDraw left = draw_cycles(left_ic, 0.0, stance_l, 0.0, 0.3 * subject.jitter, rng);
  if (iw) left.fc[0] = walk_start;
  const CycleDraw right = draw_cycles(left_ic, 0.5 + 0.5 * subject.asymmetry, stance_r,
                                      0.5 * subject.jitter, 0.3 * subject.jitter, rng);

  // Keep the swings that lie in the walking window.
  auto swings_of = [&](const CycleDraw& d) {
    FootTimeline f;
    for (std::size_t k = 0; k + 1 < d.ic.size(); ++k) {
      const Swing s{d.fc[k], d.ic[k + 1]};
      if (s.fc >= walk_start - 1e-9 && s.ic <= walk_end) f.swings.push_back(s);
    }
    return f;
  };
  const FootTimeline feet[2] = {swings_of(left), swings_of(right)};  // left, right

  ImuTrial trial;
  trial.trial_id = trial_id;
  trial.subject_id = subject.subject_id;
  trial.group = subject.group;
  trial.condition = condition;
  trial.sample_rate = sample_rate;
  trial.time.resize(std::size_t(n));
  for (Index i = 0; i < n; ++i) trial.time[std::size_t(i)] = double(i) / sample_rate;

  auto in_range = [&](double x) { return x >= 0 && x <= t_last; };
  for (int side = 0; side < 2; ++side) {
    auto& ic = side == 0 ? trial.reference_events.lic : trial.reference_events.ric;
    auto& fc = side == 0 ? trial.reference_events.lfc : trial.reference_events.rfc;
    for (const Swing& s : feet[side].swings) {
      if (in_range(s.fc)) fc.push_back(s.fc);
      if (in_range(s.ic)) ic.push_back(s.ic);
    }
  }

  // Gait-initiation and termination transients: reduced amplitude near the
  // walking window edges.
  auto amp = [&](double time) {
    if (!iw) return subject.amplitude;
    const double edge = std::min(time - walk_start, walk_end - time);
    return subject.amplitude * (0.6 + 0.4 * std::clamp(edge, 0.0, 1.0));
  };

  const Canvas canvas(n, sample_rate);
  Eigen::Matrix3Xd acc[3], gyr[3];  // anatomical frame
  for (int s = 0; s < 3; ++s) {
    acc[s] = Eigen::Matrix3Xd::Zero(3, n);
    gyr[s] = Eigen::Matrix3Xd::Zero(3, n);
    acc[s].row(2).setConstant(kGravity);
  }
  constexpr double pi = std::numbers::pi;

  for (int side = 0; side < 2; ++side) {
    const int a = side == 0 ? 1 : 2;  // ankle stream
    const double lat = side == 0 ? 1.0 : -1.0;
    for (const Swing& s : feet[side].swings) {
      const double span = s.ic - s.fc;
      const double A = amp(0.5 * (s.fc + s.ic));
      canvas.add(s.fc, s.ic, [&](Index i, double tt) {
        const double u = (tt - s.fc) / span;
        const double hump = std::pow(std::sin(pi * u), 1.5);
        gyr[a](1, i) += -4.0 * A * hump;
        gyr[a](0, i) += 0.3 * A * lat * std::sin(2 * pi * u);
        gyr[a](2, i) += 0.25 * A * lat * std::sin(pi * u);
        acc[a](0, i) += 5.0 * A * std::sin(2 * pi * u);
        acc[a](2, i) += 2.0 * A * std::sin(2 * pi * u);
        acc[a](1, i) += 0.5 * A * lat * std::sin(pi * u);
      });
      // Push-off before the final contact, foot slap and impact after the
      // initial contact.
      canvas.add(s.fc - 0.2, s.fc + 0.1, [&](Index i, double tt) {
        gyr[a](1, i) += 0.8 * A * gauss(tt - s.fc + 0.06, 0.03);
        acc[a](0, i) += 1.5 * A * gauss(tt - s.fc + 0.04, 0.03);
      });
      canvas.add(s.ic - 0.1, s.ic + 0.2, [&](Index i, double tt) {
        gyr[a](1, i) += 1.5 * A * gauss(tt - s.ic - 0.025, 0.02);
        acc[a](2, i) += 6.0 * A * gauss(tt - s.ic, 0.012);
        acc[a](0, i) += -3.0 * A * gauss(tt - s.ic, 0.015);
      });

      // Trunk: loading response after each initial contact, a smaller bump
      // at each final contact, lateral sway towards the stance side.
      canvas.add(s.ic - 0.3, s.ic + 0.5, [&](Index i, double tt) {
        const double x = tt - s.ic;
        acc[0](2, i) += A * (-0.8 * gauss(x + 0.05, 0.035) + 1.5 * gauss(x - 0.07, 0.045));
        acc[0](0, i) += A * (-2.0 * gauss(x - 0.03, 0.04) + 1.0 * gauss(x - 0.15, 0.06));
        acc[0](1, i) += 1.2 * A * lat * gauss(x - 0.12, 0.1);
        gyr[0](0, i) += 0.3 * A * lat * gauss(x - 0.1, 0.08);
        gyr[0](1, i) += 0.2 * A * gauss(x, 0.05);
        gyr[0](2, i) += 0.5 * A * lat * gauss(x - 0.1, 0.15);
      });
      canvas.add(s.fc - 0.2, s.fc + 0.2, [&](Index i, double tt) {
        const double x = tt - s.fc;
        acc[0](2, i) += 1.0 * A * gauss(x, 0.03);
        acc[0](0, i) += 0.6 * A * gauss(x + 0.02, 0.03);
        gyr[0](0, i) += -0.15 * A * lat * gauss(x, 0.05);
      });
    }
  }

  // Vertical trunk oscillation at step rate, lowest at each initial contact.
  std::vector<std::pair<double, double>> steps;  // (initial contact, amplitude)
  for (int side = 0; side < 2; ++side)
    for (const Swing& s : feet[side].swings) steps.emplace_back(s.ic, amp(s.ic));
  std::sort(steps.begin(), steps.end());
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    const double t0 = steps[k].first, t1 = steps[k + 1].first;
    const double A = 0.5 * (steps[k].second + steps[k + 1].second);
    canvas.add(t0, std::nextafter(t1, t0), [&](Index i, double tt) {
      acc[0](2, i) += -1.5 * A * std::cos(2 * pi * (tt - t0) / (t1 - t0));
    });
  }

  // Sensor noise, then rotate into each sensor frame. Orientation =
  // heading * slow drift * mounting; the drift is part of the reported
  // quaternion so the signals stay consistent with it.
  std::normal_distribution<double> nrm(0.0, 1.0);
  const double heading = uniform(rng, -pi, pi);
  const Eigen::Quaterniond qh(Eigen::AngleAxisd(heading, Eigen::Vector3d::UnitZ()));
  for (int s = 0; s < 3; ++s) {
    const Eigen::Quaterniond mount = random_rotation(rng);
    const double tilt_axis = uniform(rng, -pi, pi);
    const double tilt_phase = uniform(rng, -pi, pi);
    const double tilt_period = uniform(rng, 15, 40);
    const double yaw_rate = uniform(rng, -0.01, 0.01);
    const Eigen::Vector3d axis(std::cos(tilt_axis), std::sin(tilt_axis), 0);

    SensorStream st;
    st.accel.resize(3, n);
    st.gyro.resize(3, n);
    st.orientation.resize(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
      const double tt = double(i) / sample_rate;
      const Eigen::Quaterniond drift =
          Eigen::Quaterniond(Eigen::AngleAxisd(yaw_rate * tt, Eigen::Vector3d::UnitZ())) *
          Eigen::Quaterniond(
              Eigen::AngleAxisd(0.04 * std::sin(2 * pi * tt / tilt_period + tilt_phase), axis));
      const Eigen::Quaterniond q = (qh * drift * mount).normalized();
      Eigen::Vector3d av = acc[s].col(i), gv = gyr[s].col(i);
      for (int c = 0; c < 3; ++c) {
        av(c) += 2.0 * subject.noise * nrm(rng);
        gv(c) += 0.5 * subject.noise * nrm(rng);
      }
      const Eigen::Quaterniond qi = q.conjugate();
      st.accel.col(i) = qi * (qh * av);
      st.gyro.col(i) = qi * (qh * gv);
      st.orientation[std::size_t(i)] = q;
    }
    trial.sensors[std::size_t(s)] = std::move(st);
  }
  trial.validate();
  return trial;
}

std::vector<ImuTrial> synth_cohort(const SynthSpec& spec) {
  const auto subjects = synth_subjects(spec);
  std::vector<ImuTrial> out;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (int j = 0; j < spec.trials_per_subject; ++j) {
      const Condition c = j % 2 == 0 ? Condition::IW : Condition::CW;
      const std::string id = subjects[s].subject_id + "_" + std::string(to_string(c)) + "_" +
                             std::to_string(j / 2 + 1);
      const double duration = c == Condition::IW ? spec.iw_duration : spec.cw_duration;
      out.push_back(synth_trial(subjects[s], c, duration, spec.sample_rate,
                                mix(spec.seed, mix(s, std::uint64_t(j))), id));
    }
  }
  return out;
}

void save_cohort(const std::vector<ImuTrial>& trials, const std::filesystem::path& dir) {
  for (const auto& t : trials) save_trial(t, dir / (t.trial_id + ".csv"));
}

std::vector<ImuTrial> load_cohort(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto& p = e.path();
    if (p.extension() == ".csv" && fs::exists(fs::path(p).replace_extension(".json")))
      files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no trials (*.csv with a .json sidecar) in " + dir.string());
  std::vector<ImuTrial> out;
  for (const auto& f : files) out.push_back(load_trial(f));
  return out;
}

}  // namespace gaitseg
