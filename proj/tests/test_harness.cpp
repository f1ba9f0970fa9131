#include "doctest.h"

#include <set>

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"
#include "test_util.hpp"

using namespace gaitseg;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> subject_names(int n) {
  std::vector<std::string> s;
  for (int i = 0; i < n; ++i) s.push_back("P" + std::to_string(100 + i));
  return s;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  SynthSpec s;
  s.n_subjects = 4;
  s.iw_duration = 6;
  s.cw_duration = 6;
  s.seed = 3;
  c.synth = s;
  c.folds = 2;
  c.max_folds = 1;
  c.modes = {FeatureMode::l5_only};
  c.model.channels = 4;
  c.train.epochs = 2;
  c.train.crop_length = 256;
  c.train.batch_size = 2;
  c.inner_validation_fraction = 0.3;
  return c;
}

std::string first_line(const fs::path& p) {
  const auto text = testutil::read_file(p);
  return text.substr(0, text.find('\n'));
}

}  // namespace

TEST_CASE("synth: noiseless periodic walking has stride 1/cadence") {
  SubjectProfile s;
  s.subject_id = "S01";
  s.cadence = 0.9;
  s.jitter = 0;
  s.asymmetry = 0;
  s.noise = 0;
  const auto t = synth_trial(s, Condition::CW, 20, 128, 4, "S01_CW_1");
  const auto g = gait_features(t.reference_events);
  REQUIRE(g.left.cycles.size() >= 15);
  for (const auto* side : {&g.left, &g.right})
    for (const auto& c : side->cycles) CHECK(std::abs(c.stride - 1 / 0.9) <= 1e-9);
  CHECK(*g.stance.average == doctest::Approx(s.stance_fraction / 0.9).epsilon(1e-9));
  CHECK(*g.stride.variability <= 1e-9);
}

TEST_CASE("synth: trials are valid and deterministic") {
  SynthSpec spec;
  spec.n_subjects = 4;
  spec.iw_duration = 8;
  spec.cw_duration = 8;
  const auto a = synth_cohort(spec), b = synth_cohort(spec);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_NOTHROW(a[i].validate());
    CHECK_NOTHROW(a[i].reference_events.validate());
    CHECK(a[i].trial_id == b[i].trial_id);
    CHECK(a[i].reference_events == b[i].reference_events);
    for (SensorLocation loc : kSensorLocations) CHECK(a[i].sensor(loc).accel == b[i].sensor(loc).accel);
  }
  CHECK(a[0].trial_id == "S01_IW_1");
  CHECK(a[1].trial_id == "S01_CW_1");
  CHECK(a[0].condition == Condition::IW);
  spec.seed = 2;
  CHECK_FALSE(synth_cohort(spec)[0].sensor(SensorLocation::L5).accel == a[0].sensor(SensorLocation::L5).accel);
}

TEST_CASE("synth: PD subjects walk more variably than HC subjects") {
  SynthSpec spec;
  spec.n_subjects = 10;
  spec.trials_per_subject = 1;
  spec.iw_duration = 30;
  const auto subjects = synth_subjects(spec);
  CHECK(std::count_if(subjects.begin(), subjects.end(), [](const auto& s) { return s.group == Group::PD; }) == 5);
  double var[2] = {0, 0};
  int n[2] = {0, 0};
  for (const auto& t : synth_cohort(spec)) {
    const int g = t.group == Group::PD;
    var[g] += *gait_features(t.reference_events).stride.variability;
    ++n[g];
  }
  CHECK(var[1] / n[1] > var[0] / n[0]);
}

TEST_CASE("synth: invalid specs are configuration errors") {
  SynthSpec s;
  s.n_subjects = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SynthSpec{};
  s.pd_fraction = 1.5;
  CHECK_THROWS_AS(synth_cohort(s), ConfigError);
  CHECK_THROWS_AS(SynthSpec::from_json(Json::array()), ConfigError);
  CHECK_THROWS_AS(SynthSpec::from_json(Json{{"n_subjects", "ten"}}), ConfigError);
  const auto back = SynthSpec::from_json(SynthSpec{}.to_json());
  CHECK(back.n_subjects == SynthSpec{}.n_subjects);
  CHECK(back.seed == SynthSpec{}.seed);
}

TEST_CASE("cohort save/load keeps ids and events") {
  const auto dir = testutil::tmp_dir("cohort");
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.iw_duration = 6;
  spec.cw_duration = 5;
  const auto trials = synth_cohort(spec);
  save_cohort(trials, dir);
  const auto back = load_cohort(dir);
  REQUIRE(back.size() == trials.size());
  std::set<std::string> ids;
  for (const auto& t : back) ids.insert(t.trial_id);
  for (const auto& t : trials) CHECK(ids.count(t.trial_id));
  for (const auto& t : back) {
    const auto it = std::find_if(trials.begin(), trials.end(), [&](const auto& o) { return o.trial_id == t.trial_id; });
    CHECK(t.reference_events == it->reference_events);
  }
}

TEST_CASE("plan_folds: partition, balance, deduplication, determinism") {
  auto names = subject_names(10);
  names.push_back(names[3]);
  const auto plan = plan_folds(names, 5, 11);
  CHECK(plan.assignment.size() == 10);
  std::set<std::string> all;
  for (const auto& f : plan.folds) {
    CHECK(f.size() == 2);
    for (const auto& s : f) CHECK(all.insert(s).second);
  }
  CHECK(all.size() == 10);
  CHECK_NOTHROW(plan.verify());
  CHECK(plan_folds(names, 5, 11).assignment == plan.assignment);
  CHECK_THROWS_AS(plan_folds(subject_names(3), 5, 1), ConfigError);
  CHECK_THROWS_AS(plan_folds(subject_names(6), 1, 1), ConfigError);

  auto broken = plan;
  broken.folds[1].push_back(broken.folds[0][0]);
  CHECK_THROWS_AS(broken.verify(), LeakageError);
}

TEST_CASE("split_for_fold keeps subjects together; leakage is detected") {
  SynthSpec spec;
  spec.n_subjects = 6;
  spec.iw_duration = 6;
  spec.cw_duration = 4;
  const auto trials = synth_cohort(spec);
  std::vector<std::string> ids;
  for (const auto& t : trials) ids.push_back(t.subject_id);
  const auto plan = plan_folds(ids, 3, 5);
  for (int f = 0; f < 3; ++f) {
    const auto split = split_for_fold(trials, plan, f);
    CHECK(split.train.size() + split.validation.size() == trials.size());
    CHECK(split.validation.size() == 4);
    CHECK_NOTHROW(check_no_leakage(trials, split));
  }
  auto split = split_for_fold(trials, plan, 0);
  const auto victim = trials[split.validation[0]].subject_id;
  // move one of the validation subject's trials into training
  split.train.push_back(split.validation[0]);
  split.validation.erase(split.validation.begin());
  try {
    check_no_leakage(trials, split);
    FAIL("expected LeakageError");
  } catch (const LeakageError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
  CHECK_THROWS_AS(split_for_fold(trials, plan, 3), ContractError);
}

TEST_CASE("ExperimentConfig: json round trip and unknown keys") {
  const auto c = tiny_config();
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"train", {{"epoch", 3}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"modes", {"both"}}}), ConfigError);
  CHECK(method_name(FeatureMode::full) == "gsn_full");
  CHECK(method_name(FeatureMode::l5_only) == "gsn_l5");
}

TEST_CASE("run_experiment: small run writes every report") {
  const auto dir = testutil::tmp_dir("experiment_smoke");
  const auto r = run_experiment(tiny_config(), dir);
  CHECK(r.manifest["status"] == "ok");
  CHECK(first_line(dir / "event_errors.csv") ==
        "method,fold,trial_id,subject_id,group,condition,event_class,ref_time_s,est_time_s,error_s");
  CHECK(first_line(dir / "error_stats.csv") == "method,event_class,group,condition,n,bias_s,iqr_s,q1_s,q3_s,p5_s,p95_s");
  CHECK(first_line(dir / "detection_counts.csv") ==
        "method,fold,trial_id,group,condition,event_class,matched,false_positives,false_negatives");
  CHECK(first_line(dir / "features.csv") ==
        "method,trial_id,group,condition,feature,average,variability,asymmetry,left_cycles,right_cycles");
  CHECK(first_line(dir / "feature_errors.csv") == "method,trial_id,group,condition,feature,metric,error");
  CHECK(first_line(dir / "feature_error_stats.csv") == "method,group,condition,feature,metric,n,bias,iqr,q1,q3");
  CHECK(first_line(dir / "train_log.csv") == "fold,method,epoch,train_loss,val_loss");
  const auto manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest["version"] == kVersion);
  CHECK(manifest["folds"].size() == 1);
  CHECK(manifest.contains("config_hash"));

  std::set<std::string> methods;
  for (const auto& row : r.detection_counts) methods.insert(row.method);
  CHECK(methods == std::set<std::string>{"gsn_l5", "wt"});
  CHECK(r.train_log.size() == 2);
  CHECK_FALSE(select_errors(r, "wt", "IC").empty());
  for (const auto& row : r.event_errors) CHECK(std::abs(row.error) <= 0.5);
}

TEST_CASE("run_experiment: explicit splits with leakage abort before training") {
  const auto dir = testutil::tmp_dir("experiment_leak");
  auto c = tiny_config();
  c.splits = {{{"S01_IW_1", "S02_IW_1", "S02_CW_1"}, {"S01_CW_1", "S03_IW_1"}}};
  CHECK_THROWS_AS(run_experiment(c, dir), LeakageError);
  const auto manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest["status"] == "failed");
  CHECK(manifest["failure"]["error_type"].get<std::string>().find("eakage") != std::string::npos);
  CHECK(manifest["failure"]["message"].get<std::string>().find("S01") != std::string::npos);

  auto missing = tiny_config();
  missing.splits = {{{"S01_IW_1"}, {"S09_IW_1"}}};
  CHECK_THROWS_AS(run_experiment(missing, testutil::tmp_dir("experiment_missing")), ConfigError);
}
