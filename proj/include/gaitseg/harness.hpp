#pragma once

// Synthetic cohorts with exact ground truth, subject-grouped folds and the
// end-to-end cross-validation experiment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaitseg/events.hpp"
#include "gaitseg/gaitmetrics.hpp"
#include "gaitseg/gsn.hpp"
#include "gaitseg/ingest.hpp"
#include "gaitseg/io.hpp"
#include "gaitseg/wtbaseline.hpp"

namespace gaitseg {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Synthetic data

struct SubjectProfile {
  std::string subject_id;
  Group group = Group::HC;
  double cadence = 0.95;         // strides per second
  double stance_fraction = 0.61;
  double asymmetry = 0.0;        // relative left/right stance and phase offset
  double jitter = 0.01;          // SD of stride duration, seconds
  double amplitude = 1.0;
  double noise = 0.1;

  void validate() const;
};

struct SynthSpec {
  int n_subjects = 10;
  int trials_per_subject = 2;   // alternating IW, CW
  double pd_fraction = 0.5;
  double sample_rate = 128.0;
  double noise = 0.1;           // sensor noise level (relative)
  double jitter_scale = 1.0;    // multiplies each subject's stride jitter
  double iw_duration = 12.0;    // seconds, includes 1 s standing at each end
  double cw_duration = 30.0;
  std::uint64_t seed = 1;
  std::vector<SubjectProfile> subjects;  // explicit profiles override the draw

  void validate() const;
  static SynthSpec from_json(const Json& j);
  Json to_json() const;
};

/// Subject profiles drawn from the spec (or taken verbatim when listed).
std::vector<SubjectProfile> synth_subjects(const SynthSpec& spec);

/// One sensor-frame trial with exact reference events; deterministic in `seed`.
ImuTrial synth_trial(const SubjectProfile& subject, Condition condition, double duration,
                     double sample_rate, std::uint64_t seed, const std::string& trial_id);

std::vector<ImuTrial> synth_cohort(const SynthSpec& spec);

/// Writes every trial as `<trial_id>.csv` + `<trial_id>.json` under `dir`.
void save_cohort(const std::vector<ImuTrial>& trials, const std::filesystem::path& dir);
/// Loads every `*.csv` with a sidecar under `dir`, sorted by file name.
std::vector<ImuTrial> load_cohort(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  int k = 5;
  std::map<std::string, int> assignment;          // subject -> fold
  std::vector<std::vector<std::string>> folds;    // fold -> subjects

  /// Throws LeakageError unless folds partition the assigned subjects.
  void verify() const;
};

/// Deduplicates, shuffles with `seed` and deals subjects round-robin.
FoldPlan plan_folds(std::vector<std::string> subjects, int k, std::uint64_t seed);

struct TrialSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TrialSplit split_for_fold(const std::vector<ImuTrial>& trials, const FoldPlan& plan, int fold);

/// Throws LeakageError when a subject has trials on both sides.
void check_no_leakage(const std::vector<ImuTrial>& trials, const TrialSplit& split);

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int folds = 5;
  int max_folds = 0;  // 0 runs every fold
  std::vector<FeatureMode> modes = {FeatureMode::full, FeatureMode::l5_only};
  std::optional<SynthSpec> synth;
  std::optional<std::filesystem::path> data_dir;
  GsnConfig model;  // in_channels is set per mode
  TrainSpec train;
  double inner_validation_fraction = 0.1;
  PeakParams peaks;
  double match_window = 0.5;
  WtParams wt;
  bool run_wt = true;
  int threads = 1;
  bool verbose = false;  // per-epoch progress on stderr
  /// Explicit splits by trial id; replaces the fold plan when non-empty.
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> splits;

  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;
};

/// "gsn_full", "gsn_l5" or "wt".
std::string method_name(FeatureMode mode);
inline constexpr const char* kWtMethod = "wt";
inline constexpr const char* kReferenceMethod = "reference";

struct EventErrorRow {
  std::string method;
  int fold;
  std::string trial_id;
  std::string subject_id;
  Group group;
  Condition condition;
  std::string event_class;  // a class key, or "IC"/"FC" for side-agnostic matching
  double ref_time;
  double est_time;
  double error;
};

struct DetectionCountRow {
  std::string method;
  int fold;
  std::string trial_id;
  Group group;
  Condition condition;
  std::string event_class;  // as in EventErrorRow
  std::size_t matched, false_positives, false_negatives;
};

struct FeatureRow {
  std::string method;
  std::string trial_id;
  Group group;
  Condition condition;
  GaitFeatureSet features;
};

struct TrainLogRow {
  int fold;
  std::string method;
  int epoch;
  double train_loss;
  double val_loss;
};

struct ExperimentResult {
  std::vector<EventErrorRow> event_errors;
  std::vector<DetectionCountRow> detection_counts;
  std::vector<FeatureRow> features;
  std::vector<TrainLogRow> train_log;
  Json manifest;
};

/// Signed errors for one method and event class ("IC", "FC" or a class key),
/// optionally filtered by group and condition.
std::vector<double> select_errors(const ExperimentResult& r, const std::string& method,
                                  const std::string& event_class,
                                  std::optional<Group> group = std::nullopt,
                                  std::optional<Condition> condition = std::nullopt);

/// Runs the full cross-validation and writes the CSV reports and
/// manifest.json under `out_dir`. On failure the manifest records the failing
/// fold and stage, partial reports are written, and the error is rethrown.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir);

/// Same, on already-loaded trials (ignores config.synth / config.data_dir).
ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<ImuTrial>& trials,
                                const std::filesystem::path& out_dir);

}  // namespace gaitseg
