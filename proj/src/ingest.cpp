#include "gaitseg/ingest.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gaitseg/errors.hpp"
#include "gaitseg/io.hpp"

namespace gaitseg {

std::string_view to_string(Group g) { return g == Group::HC ? "HC" : "PD"; }
std::string_view to_string(Condition c) { return c == Condition::IW ? "IW" : "CW"; }
std::string_view to_string(FeatureMode m) { return m == FeatureMode::full ? "full" : "l5_only"; }

std::string_view sensor_prefix(SensorLocation s) {
  switch (s) {
    case SensorLocation::L5: return "L5";
    case SensorLocation::left_ankle: return "LA";
    case SensorLocation::right_ankle: return "RA";
  }
  return "?";
}

Group parse_group(std::string_view s) {
  if (s == "HC") return Group::HC;
  if (s == "PD") return Group::PD;
  throw DataError("unknown group '" + std::string(s) + "' (expected HC or PD)");
}

Condition parse_condition(std::string_view s) {
  if (s == "IW") return Condition::IW;
  if (s == "CW") return Condition::CW;
  throw DataError("unknown condition '" + std::string(s) + "' (expected IW or CW)");
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "full") return FeatureMode::full;
  if (s == "l5_only") return FeatureMode::l5_only;
  throw ConfigError("unknown feature mode '" + std::string(s) + "' (expected full or l5_only)");
}

const SensorStream& ImuTrial::sensor(SensorLocation s) const {
  if (!has(s))
    throw ContractError("trial " + trial_id + " has no " + std::string(sensor_prefix(s)) + " sensor");
  return *sensors[int(s)];
}

SensorStream& ImuTrial::sensor(SensorLocation s) {
  return const_cast<SensorStream&>(std::as_const(*this).sensor(s));
}

void ImuTrial::validate() const {
  const std::string where = "trial " + trial_id + ": ";
  if (!(sample_rate > 0)) throw DataError(where + "sample_rate must be positive");
  if (time.empty()) throw DataError(where + "no samples");
  for (std::size_t i = 1; i < time.size(); ++i)
    if (!(time[i] > time[i - 1]))
      throw DataError(where + "time is not strictly increasing at sample " + std::to_string(i));
  if (!has(SensorLocation::L5)) throw DataError(where + "the L5 sensor is required");
  for (SensorLocation loc : kSensorLocations) {
    if (!has(loc)) continue;
    const auto& s = *sensors[int(loc)];
    const std::string name(sensor_prefix(loc));
    if (s.accel.cols() != n_samples() || s.gyro.cols() != n_samples() ||
        Index(s.orientation.size()) != n_samples())
      throw DataError(where + name + " streams do not share the trial length");
    for (Index k = 0; k < n_samples(); ++k) {
      const double norm = s.orientation[k].norm();
      if (!(std::abs(norm - 1.0) <= kQuaternionTolerance))
        throw DataError(where + name + " quaternion at sample " + std::to_string(k) +
                        " has norm " + std::to_string(norm));
    }
    if (!s.accel.allFinite() || !s.gyro.allFinite())
      throw DataError(where + name + " has non-finite samples");
  }
  for (EventClass c : kEventClasses)
    for (double t : reference_events[c])
      if (!(t >= 0 && t <= duration()))
        throw DataError(where + "reference event " + std::string(event_key(c)) + " at " +
                        std::to_string(t) + " s is outside [0, " + std::to_string(duration()) + "]");
  reference_events.validate(0.0);
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr std::array<std::string_view, 10> kSensorFields = {
    "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z", "q_w", "q_x", "q_y", "q_z"};

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  return p.replace_extension(".json");
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

ImuTrial load_trial(const std::filesystem::path& csv_path) {
  const std::string file = csv_path.string();
  const Json meta = read_json_file(sidecar_path(csv_path));
  ImuTrial trial;
  try {
    trial.trial_id = meta.value("trial_id", csv_path.stem().string());
    trial.subject_id = meta.at("subject_id").get<std::string>();
    trial.group = parse_group(meta.at("group").get<std::string>());
    trial.condition = parse_condition(meta.at("condition").get<std::string>());
    trial.sample_rate = meta.at("sample_rate").get<double>();
    if (meta.contains("reference_events"))
      trial.reference_events = events_from_json(meta.at("reference_events"));
  } catch (const Json::exception& e) {
    throw DataError(sidecar_path(csv_path).string() + ": " + e.what());
  }

  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open " + file);
  std::string line;
  if (!std::getline(in, line)) throw DataError(file + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(std::string(header[i]), i);

  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw DataError(file + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t time_col = require("time_s");

  struct SensorColumns {
    SensorLocation loc;
    std::array<std::size_t, 10> col;
  };
  std::vector<SensorColumns> present;
  for (SensorLocation loc : kSensorLocations) {
    const std::string prefix(sensor_prefix(loc));
    bool any = false;
    for (auto f : kSensorFields) any |= column.count(prefix + "_" + std::string(f)) > 0;
    if (!any && loc != SensorLocation::L5) continue;
    SensorColumns sc{loc, {}};
    for (std::size_t f = 0; f < kSensorFields.size(); ++f)
      sc.col[f] = require(prefix + "_" + std::string(kSensorFields[f]));
    present.push_back(sc);
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw DataError(file + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    std::vector<double> vals(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      auto [p, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), vals[i]);
      if (ec != std::errc() || p != cells[i].data() + cells[i].size())
        throw DataError(file + ":" + std::to_string(line_no) + ": field '" +
                        std::string(header[i]) + "' is not a number");
    }
    if (!rows.empty() && !(vals[time_col] > rows.back()[time_col]))
      throw DataError(file + ":" + std::to_string(line_no) + ": time_s is not strictly increasing");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(file + ": no samples");

  const Index n = Index(rows.size());
  trial.time.resize(rows.size());
  for (Index t = 0; t < n; ++t) trial.time[t] = rows[t][time_col];
  for (const auto& sc : present) {
    SensorStream s;
    s.accel.resize(3, n);
    s.gyro.resize(3, n);
    s.orientation.resize(rows.size());
    for (Index t = 0; t < n; ++t) {
      const auto& r = rows[t];
      for (int a = 0; a < 3; ++a) {
        s.accel(a, t) = r[sc.col[a]];
        s.gyro(a, t) = r[sc.col[3 + a]];
      }
      s.orientation[t] = Eigen::Quaterniond(r[sc.col[6]], r[sc.col[7]], r[sc.col[8]], r[sc.col[9]]);
      const double norm = s.orientation[t].norm();
      if (!(std::abs(norm - 1.0) <= kQuaternionTolerance))
        throw DataError(file + ": " + std::string(sensor_prefix(sc.loc)) +
                        " quaternion at sample " + std::to_string(t) + " (line " +
                        std::to_string(t + 2) + ") has norm " + std::to_string(norm));
    }
    trial.sensors[int(sc.loc)] = std::move(s);
  }
  trial.validate();
  return trial;
}

void save_trial(const ImuTrial& trial, const std::filesystem::path& csv_path) {
  if (trial.frame != Frame::sensor)
    throw ContractError("save_trial: only sensor-frame trials are written to disk");
  std::vector<std::string> header = {"time_s"};
  std::vector<SensorLocation> present;
  for (SensorLocation loc : kSensorLocations) {
    if (!trial.has(loc)) continue;
    present.push_back(loc);
    for (auto f : kSensorFields)
      header.push_back(std::string(sensor_prefix(loc)) + "_" + std::string(f));
  }
  std::string text = csv_row(header);
  text.reserve(std::size_t(trial.n_samples()) * header.size() * 14);
  for (Index t = 0; t < trial.n_samples(); ++t) {
    text += format_double(trial.time[t], 12);
    for (SensorLocation loc : present) {
      const auto& s = trial.sensor(loc);
      const auto& q = s.orientation[t];
      const double vals[10] = {s.accel(0, t), s.accel(1, t), s.accel(2, t), s.gyro(0, t),
                               s.gyro(1, t),  s.gyro(2, t),  q.w(),       q.x(),
                               q.y(),         q.z()};
      for (double v : vals) {
        text += ',';
        text += format_double(v, 10);
      }
    }
    text += '\n';
  }
  write_text_file(csv_path, text);

  Json meta = {{"trial_id", trial.trial_id},
               {"subject_id", trial.subject_id},
               {"group", std::string(to_string(trial.group))},
               {"condition", std::string(to_string(trial.condition))},
               {"sample_rate", trial.sample_rate},
               {"reference_events", events_to_json(trial.reference_events)}};
  write_text_file(sidecar_path(csv_path), meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Projection

namespace {

Eigen::Matrix3Xd rotate_all(const Eigen::Matrix3Xd& v, const std::vector<Eigen::Quaterniond>& q) {
  Eigen::Matrix3Xd out(3, v.cols());
  for (Index t = 0; t < v.cols(); ++t) out.col(t) = q[t].normalized() * Eigen::Vector3d(v.col(t));
  return out;
}

// Mediolateral direction from the dominant horizontal axis of global-frame
// ankle angular velocity (sagittal shank rotation). The sign puts the large
// swing-phase excursions on the negative side of the left-pointing axis.
std::optional<Eigen::Vector2d> ankle_mediolateral(const std::vector<const Eigen::Matrix3Xd*>& gyros) {
  Index n = 0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto* g : gyros) {
    mean += g->topRows<2>().rowwise().sum();
    n += g->cols();
  }
  if (n < 3) return std::nullopt;
  mean /= double(n);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto* g : gyros) {
    const Eigen::Matrix2Xd c = g->topRows<2>().colwise() - mean;
    cov += c * c.transpose();
  }
  cov /= double(n);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(1);
  if (!(hi > 1e-12) || hi < 1.5 * lo) return std::nullopt;
  Eigen::Vector2d axis = es.eigenvectors().col(1).normalized();
  double third = 0;
  for (const auto* g : gyros) {
    const Eigen::RowVectorXd proj = axis.transpose() * (g->topRows<2>().colwise() - mean);
    third += proj.array().cube().sum();
  }
  if (third > 0) axis = -axis;
  return axis;
}

}  // namespace

ImuTrial project_to_anatomical(const ImuTrial& trial) {
  if (trial.frame == Frame::anatomical) return trial;
  ImuTrial out = trial;
  for (SensorLocation loc : kSensorLocations) {
    if (!out.has(loc)) continue;
    auto& s = out.sensor(loc);
    s.accel = rotate_all(s.accel, s.orientation);
    s.gyro = rotate_all(s.gyro, s.orientation);
  }

  ProjectionInfo info;
  Eigen::Vector2d ap;
  std::vector<const Eigen::Matrix3Xd*> ankle_gyros;
  for (SensorLocation loc : {SensorLocation::left_ankle, SensorLocation::right_ankle})
    if (out.has(loc)) ankle_gyros.push_back(&out.sensor(loc).gyro);
  std::optional<Eigen::Vector2d> ml;
  if (!ankle_gyros.empty()) ml = ankle_mediolateral(ankle_gyros);
  if (ml) {
    info.method = "ankle_gyro_pca";
    ap = Eigen::Vector2d((*ml)(1), -(*ml)(0));  // ap = ml x up
  } else {
    info.method = "l5_forward_axis";
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& q : trial.sensor(SensorLocation::L5).orientation)
      mean += (q.normalized() * Eigen::Vector3d::UnitX()).head<2>();
    mean /= double(trial.n_samples());
    if (mean.norm() < 1e-6)
      throw DataError("trial " + trial.trial_id +
                      ": degenerate heading, the mean horizontal forward axis vanishes");
    ap = mean.normalized();
  }
  info.heading_rad = std::atan2(ap(1), ap(0));
  const Eigen::Vector2d left(-ap(1), ap(0));  // up x ap

  Eigen::Matrix3d to_anat;
  to_anat << ap(0), ap(1), 0, left(0), left(1), 0, 0, 0, 1;
  for (SensorLocation loc : kSensorLocations) {
    if (!out.has(loc)) continue;
    auto& s = out.sensor(loc);
    s.accel = to_anat * s.accel;
    s.gyro = to_anat * s.gyro;
  }
  out.frame = Frame::anatomical;
  out.projection = info;
  return out;
}

// ---------------------------------------------------------------------------
// Features

namespace {

constexpr std::array<std::string_view, 8> kChannelSuffix = {
    "acc_x", "acc_y", "acc_z", "acc_mag", "gyr_x", "gyr_y", "gyr_z", "gyr_mag"};

std::vector<SensorLocation> mode_locations(FeatureMode mode) {
  if (mode == FeatureMode::l5_only) return {SensorLocation::L5};
  return {kSensorLocations.begin(), kSensorLocations.end()};
}

}  // namespace

std::vector<std::string> feature_channel_names(FeatureMode mode) {
  std::vector<std::string> names;
  for (SensorLocation loc : mode_locations(mode))
    for (auto suffix : kChannelSuffix)
      names.push_back(std::string(sensor_prefix(loc)) + "_" + std::string(suffix));
  return names;
}

int feature_channel_count(FeatureMode mode) { return mode == FeatureMode::full ? 24 : 8; }

void normalize_channels(Signal2D& data, std::span<const std::string> names,
                        std::vector<std::string>* warnings) {
  for (Index r = 0; r < data.rows(); ++r) {
    auto row = data.row(r);
    const double mean = row.mean();
    row.array() -= mean;
    const double rms = std::sqrt(row.squaredNorm() / double(row.size()));
    if (!(rms > 1e-12 * std::max(1.0, std::abs(mean)))) {
      row.setZero();
      if (warnings) {
        const std::string name = r < Index(names.size()) ? names[r] : std::to_string(r);
        warnings->push_back("channel " + name + " is constant; normalized to zeros");
      }
      continue;
    }
    row /= rms;
  }
}

FeatureTensor build_features(const ImuTrial& projected, FeatureMode mode) {
  if (projected.frame != Frame::anatomical)
    throw ContractError("build_features: trial " + projected.trial_id +
                        " must be projected to the anatomical frame first");
  const auto locations = mode_locations(mode);
  const Index n = projected.n_samples();
  FeatureTensor ft;
  ft.sample_rate = projected.sample_rate;
  ft.channel_names = feature_channel_names(mode);
  ft.data.resize(Index(8 * locations.size()), n);
  Index row = 0;
  for (SensorLocation loc : locations) {
    if (!projected.has(loc))
      throw DataError("trial " + projected.trial_id + " lacks the " +
                      std::string(sensor_prefix(loc)) + " sensor required by " +
                      std::string(to_string(mode)) + " mode");
    const auto& s = projected.sensor(loc);
    for (const Eigen::Matrix3Xd* v : {&s.accel, &s.gyro}) {
      ft.data.middleRows(row, 3) = *v;
      ft.data.row(row + 3) = v->colwise().norm();
      row += 4;
    }
  }
  normalize_channels(ft.data, ft.channel_names, &ft.warnings);
  return ft;
}

std::vector<Index> events_to_samples(std::span<const double> times, double sample_rate) {
  std::vector<Index> idx;
  idx.reserve(times.size());
  for (double t : times) idx.push_back(Index(std::floor(t * sample_rate + 0.5)));
  return idx;
}

}  // namespace gaitseg
