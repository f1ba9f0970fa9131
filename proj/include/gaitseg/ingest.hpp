#pragma once

// Trial files, sensor-to-anatomical projection and network input assembly.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitseg/event_set.hpp"
#include "gaitseg/numcore.hpp"

namespace gaitseg {

enum class Group { HC, PD };
enum class Condition { IW, CW };
enum class SensorLocation : int { L5 = 0, left_ankle = 1, right_ankle = 2 };
enum class Frame { sensor, anatomical };
enum class FeatureMode { full, l5_only };

inline constexpr std::array<SensorLocation, 3> kSensorLocations = {
    SensorLocation::L5, SensorLocation::left_ankle, SensorLocation::right_ankle};

std::string_view to_string(Group g);
std::string_view to_string(Condition c);
std::string_view to_string(FeatureMode m);
/// Column prefix: "L5", "LA", "RA".
std::string_view sensor_prefix(SensorLocation s);
Group parse_group(std::string_view s);
Condition parse_condition(std::string_view s);
FeatureMode parse_feature_mode(std::string_view s);

inline constexpr double kQuaternionTolerance = 1e-3;
inline constexpr double kGravity = 9.81;

struct SensorStream {
  Eigen::Matrix3Xd accel;  // m/s^2
  Eigen::Matrix3Xd gyro;   // rad/s
  std::vector<Eigen::Quaterniond> orientation;  // sensor -> global, global z up

  Index size() const { return accel.cols(); }
};

/// Heading estimate used to build the anatomical frame; kept for auditing.
struct ProjectionInfo {
  std::string method;  // "ankle_gyro_pca" or "l5_forward_axis"
  double heading_rad = 0;  // anteroposterior direction, measured from global x
};

/// A multi-sensor recording. Once projected, vector axes are
/// x = anteroposterior, y = mediolateral (left), z = craniocaudal (up).
struct ImuTrial {
  std::string trial_id;
  std::string subject_id;
  Group group = Group::HC;
  Condition condition = Condition::IW;
  double sample_rate = 128.0;
  std::vector<double> time;  // seconds, strictly increasing
  std::array<std::optional<SensorStream>, 3> sensors;
  EventSet reference_events;  // seconds from the first sample
  Frame frame = Frame::sensor;
  std::optional<ProjectionInfo> projection;

  Index n_samples() const { return Index(time.size()); }
  double duration() const { return double(n_samples()) / sample_rate; }
  bool has(SensorLocation s) const { return sensors[int(s)].has_value(); }
  const SensorStream& sensor(SensorLocation s) const;
  SensorStream& sensor(SensorLocation s);

  /// Stream lengths, quaternion norms, time monotonicity and event ranges.
  void validate() const;
};

/// Reads `<stem>.csv` and its sidecar `<stem>.json`.
ImuTrial load_trial(const std::filesystem::path& csv_path);
/// Writes `<stem>.csv` and `<stem>.json`.
void save_trial(const ImuTrial& trial, const std::filesystem::path& csv_path);

/// Rotates every sample into the global frame with its quaternion, then into
/// the subject-fixed anatomical frame around the vertical axis.
ImuTrial project_to_anatomical(const ImuTrial& trial);

/// Normalized [channels x samples] network input.
struct FeatureTensor {
  Signal2D data;
  std::vector<std::string> channel_names;
  double sample_rate = 128.0;
  std::vector<std::string> warnings;
};

/// (L5, LA, RA) x (acc_x, acc_y, acc_z, acc_mag, gyr_x, gyr_y, gyr_z, gyr_mag),
/// restricted to L5 in l5_only mode.
std::vector<std::string> feature_channel_names(FeatureMode mode);
int feature_channel_count(FeatureMode mode);

FeatureTensor build_features(const ImuTrial& projected, FeatureMode mode);

/// Zero mean and unit average power per row. Constant rows become zeros and
/// add a warning.
void normalize_channels(Signal2D& data, std::span<const std::string> names,
                        std::vector<std::string>* warnings = nullptr);

/// Nearest-sample rounding, ties up.
std::vector<Index> events_to_samples(std::span<const double> times, double sample_rate);

}  // namespace gaitseg
