#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <utility>

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"

namespace gaitseg {

std::string method_name(FeatureMode mode) {
  return mode == FeatureMode::full ? "gsn_full" : "gsn_l5";
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key \"" + k + "\"");
  }
}

std::vector<std::string> string_list(const Json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  reject_unknown(j,
                 {"seed", "folds", "max_folds", "modes", "synth", "data_dir", "model", "train",
                  "inner_validation_fraction", "peaks", "match_window", "wt", "run_wt", "threads",
                  "splits", "verbose"},
                 "experiment config");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.folds = j.value("folds", c.folds);
    c.max_folds = j.value("max_folds", c.max_folds);
    if (j.contains("modes")) {
      c.modes.clear();
      for (const auto& m : j.at("modes")) c.modes.push_back(parse_feature_mode(m.get<std::string>()));
    }
    if (j.contains("synth")) c.synth = SynthSpec::from_json(j.at("synth"));
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("model")) {
      const Json& m = j.at("model");
      reject_unknown(m, {"channels", "num_dilated_layers", "kernel", "dilations", "bn_momentum", "bn_epsilon"},
                     "model");
      c.model.channels = m.value("channels", c.model.channels);
      c.model.kernel = m.value("kernel", c.model.kernel);
      c.model.bn_momentum = m.value("bn_momentum", c.model.bn_momentum);
      c.model.bn_epsilon = m.value("bn_epsilon", c.model.bn_epsilon);
      if (m.contains("dilations")) {
        c.model.dilations = m.at("dilations").get<std::vector<int>>();
        c.model.num_dilated_layers = int(c.model.dilations.size());
      }
      if (m.contains("num_dilated_layers")) {
        c.model.num_dilated_layers = m.at("num_dilated_layers").get<int>();
        if (!m.contains("dilations")) {
          c.model.dilations.clear();
          for (int i = 0; i < c.model.num_dilated_layers; ++i) c.model.dilations.push_back(1 << i);
        }
      }
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      reject_unknown(t, {"epochs", "crop_length", "batch_size", "lr", "target_sigma", "patience"}, "train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.crop_length = t.value("crop_length", c.train.crop_length);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.lr = t.value("lr", c.train.lr);
      c.train.target_sigma = t.value("target_sigma", c.train.target_sigma);
      c.train.patience = t.value("patience", c.train.patience);
    }
    c.inner_validation_fraction = j.value("inner_validation_fraction", c.inner_validation_fraction);
    if (j.contains("peaks")) {
      const Json& p = j.at("peaks");
      reject_unknown(p, {"threshold", "min_distance"}, "peaks");
      c.peaks.threshold = p.value("threshold", c.peaks.threshold);
      c.peaks.min_distance = p.value("min_distance", c.peaks.min_distance);
    }
    c.match_window = j.value("match_window", c.match_window);
    if (j.contains("wt")) {
      const Json& w = j.at("wt");
      reject_unknown(w, {"cwt_scale", "integrate_first"}, "wt");
      c.wt.cwt_scale = w.value("cwt_scale", c.wt.cwt_scale);
      c.wt.integrate_first = w.value("integrate_first", c.wt.integrate_first);
    }
    c.run_wt = j.value("run_wt", c.run_wt);
    c.threads = j.value("threads", c.threads);
    c.verbose = j.value("verbose", c.verbose);
    if (j.contains("splits")) {
      for (const auto& s : j.at("splits")) {
        reject_unknown(s, {"train", "validation"}, "splits[]");
        c.splits.emplace_back(string_list(s.at("train")), string_list(s.at("validation")));
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }

  if (c.synth && c.data_dir) throw ConfigError("experiment config: give either synth or data_dir, not both");
  if (c.splits.empty() && c.folds < 2) throw ConfigError("experiment config: folds must be >= 2");
  if (c.max_folds < 0) throw ConfigError("experiment config: max_folds must be >= 0");
  if (c.modes.empty() && !c.run_wt) throw ConfigError("experiment config: nothing to run");
  if (!(c.inner_validation_fraction >= 0 && c.inner_validation_fraction < 1))
    throw ConfigError("experiment config: inner_validation_fraction must lie in [0, 1)");
  if (!(c.match_window > 0)) throw ConfigError("experiment config: match_window must be positive");
  if (!(c.peaks.threshold > 0 && c.peaks.threshold < 1))
    throw ConfigError("experiment config: peak threshold must lie in (0, 1)");
  if (!(c.peaks.min_distance >= 0)) throw ConfigError("experiment config: min_distance must be >= 0");
  if (c.threads < 1) throw ConfigError("experiment config: threads must be >= 1");
  if (c.train.epochs < 1 || c.train.batch_size < 1 || !(c.train.lr > 0) || !(c.train.target_sigma > 0))
    throw ConfigError("experiment config: bad training settings");
  c.model.validate();
  return c;
}

Json ExperimentConfig::to_json() const {
  Json modes_j = Json::array();
  for (FeatureMode m : modes) modes_j.push_back(std::string(to_string(m)));
  Json j = {
      {"seed", seed},
      {"folds", folds},
      {"max_folds", max_folds},
      {"modes", modes_j},
      {"model",
       {{"channels", model.channels},
        {"num_dilated_layers", model.num_dilated_layers},
        {"kernel", model.kernel},
        {"dilations", model.dilations},
        {"bn_momentum", model.bn_momentum},
        {"bn_epsilon", model.bn_epsilon}}},
      {"train",
       {{"epochs", train.epochs},
        {"crop_length", train.crop_length},
        {"batch_size", train.batch_size},
        {"lr", train.lr},
        {"target_sigma", train.target_sigma},
        {"patience", train.patience}}},
      {"inner_validation_fraction", inner_validation_fraction},
      {"peaks", {{"threshold", peaks.threshold}, {"min_distance", peaks.min_distance}}},
      {"match_window", match_window},
      {"wt", {{"cwt_scale", wt.cwt_scale}, {"integrate_first", wt.integrate_first}}},
      {"run_wt", run_wt},
      {"threads", threads},
  };
  if (synth) j["synth"] = synth->to_json();
  if (data_dir) j["data_dir"] = data_dir->string();
  if (!splits.empty()) {
    Json arr = Json::array();
    for (const auto& [tr, va] : splits) arr.push_back({{"train", tr}, {"validation", va}});
    j["splits"] = arr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<double> select_errors(const ExperimentResult& r, const std::string& method,
                                  const std::string& event_class, std::optional<Group> group,
                                  std::optional<Condition> condition) {
  std::vector<double> out;
  for (const auto& row : r.event_errors) {
    if (row.method != method) continue;
    if (group && row.group != *group) continue;
    if (condition && row.condition != *condition) continue;
    if (row.event_class == event_class) out.push_back(row.error);
  }
  return out;
}

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::vector<std::string> methods_in(const ExperimentResult& r) {
  std::vector<std::string> out;
  auto add = [&](const std::string& m) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  };
  for (const auto& row : r.event_errors) add(row.method);
  for (const auto& row : r.detection_counts) add(row.method);
  return out;
}

const std::vector<std::string> kClassFilters = {"IC", "FC", "ric", "rfc", "lic", "lfc"};

std::string error_stats_csv(const ExperimentResult& r) {
  std::string text = csv_row({"method", "event_class", "group", "condition", "n", "bias_s", "iqr_s", "q1_s",
                              "q3_s", "p5_s", "p95_s"});
  const std::vector<std::optional<Group>> groups = {std::nullopt, Group::HC, Group::PD};
  const std::vector<std::optional<Condition>> conds = {std::nullopt, Condition::IW, Condition::CW};
  for (const auto& m : methods_in(r)) {
    for (const auto& cls : kClassFilters) {
      for (const auto& g : groups) {
        for (const auto& c : conds) {
          const ErrorStats s = error_stats(select_errors(r, m, cls, g, c));
          text += csv_row({m, cls, g ? std::string(to_string(*g)) : "all",
                           c ? std::string(to_string(*c)) : "all", fmt(s.n), fmt(s.bias), fmt(s.iqr),
                           fmt(s.q1), fmt(s.q3), fmt(s.p5), fmt(s.p95)});
        }
      }
    }
  }
  return text;
}

std::string event_errors_csv(const ExperimentResult& r) {
  std::string text = csv_row({"method", "fold", "trial_id", "subject_id", "group", "condition", "event_class",
                              "ref_time_s", "est_time_s", "error_s"});
  for (const auto& e : r.event_errors)
    text += csv_row({e.method, std::to_string(e.fold), e.trial_id, e.subject_id, std::string(to_string(e.group)),
                     std::string(to_string(e.condition)), e.event_class,
                     fmt(e.ref_time), fmt(e.est_time), fmt(e.error)});
  return text;
}

std::string detection_counts_csv(const ExperimentResult& r) {
  std::string text = csv_row({"method", "fold", "trial_id", "group", "condition", "event_class", "matched",
                              "false_positives", "false_negatives"});
  for (const auto& d : r.detection_counts)
    text += csv_row({d.method, std::to_string(d.fold), d.trial_id, std::string(to_string(d.group)),
                     std::string(to_string(d.condition)), d.event_class, fmt(d.matched),
                     fmt(d.false_positives), fmt(d.false_negatives)});
  return text;
}

std::string features_csv(const ExperimentResult& r) {
  std::string text = csv_row({"method", "trial_id", "group", "condition", "feature", "average", "variability",
                              "asymmetry", "left_cycles", "right_cycles"});
  for (const auto& row : r.features)
    for (GaitFeature f : kGaitFeatures) {
      const FeatureSummary& s = row.features.get(f);
      text += csv_row({row.method, row.trial_id, std::string(to_string(row.group)),
                       std::string(to_string(row.condition)), std::string(to_string(f)), fmt_opt(s.average),
                       fmt_opt(s.variability), fmt_opt(s.asymmetry), fmt(row.features.left.cycles.size()),
                       fmt(row.features.right.cycles.size())});
    }
  return text;
}

struct FeatureErrorRow {
  std::string method, trial_id;
  Group group;
  Condition condition;
  FeatureError error;
};

std::vector<FeatureErrorRow> feature_error_rows(const ExperimentResult& r) {
  std::map<std::string, const FeatureRow*> reference;
  for (const auto& row : r.features)
    if (row.method == kReferenceMethod) reference[row.trial_id] = &row;
  std::vector<FeatureErrorRow> out;
  for (const auto& row : r.features) {
    if (row.method == kReferenceMethod) continue;
    const auto it = reference.find(row.trial_id);
    if (it == reference.end()) continue;
    for (const auto& fe : feature_errors(row.features, it->second->features))
      out.push_back({row.method, row.trial_id, row.group, row.condition, fe});
  }
  return out;
}

std::string feature_errors_csv(const std::vector<FeatureErrorRow>& rows) {
  std::string text = csv_row({"method", "trial_id", "group", "condition", "feature", "metric", "error"});
  for (const auto& r : rows)
    text += csv_row({r.method, r.trial_id, std::string(to_string(r.group)), std::string(to_string(r.condition)),
                     std::string(to_string(r.error.feature)), std::string(to_string(r.error.metric)),
                     fmt_opt(r.error.error)});
  return text;
}

std::string feature_error_stats_csv(const std::vector<FeatureErrorRow>& rows) {
  std::string text = csv_row({"method", "group", "condition", "feature", "metric", "n", "bias", "iqr", "q1", "q3"});
  std::vector<std::string> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  const std::vector<std::optional<Group>> groups = {std::nullopt, Group::HC, Group::PD};
  const std::vector<std::optional<Condition>> conds = {std::nullopt, Condition::IW, Condition::CW};
  for (const auto& m : methods)
    for (const auto& g : groups)
      for (const auto& c : conds)
        for (GaitFeature f : kGaitFeatures)
          for (GaitMetric mt : kGaitMetrics) {
            std::vector<double> errs;
            for (const auto& r : rows)
              if (r.method == m && (!g || r.group == *g) && (!c || r.condition == *c) &&
                  r.error.feature == f && r.error.metric == mt && r.error.error)
                errs.push_back(*r.error.error);
            const ErrorStats s = error_stats(errs);
            text += csv_row({m, g ? std::string(to_string(*g)) : "all", c ? std::string(to_string(*c)) : "all",
                             std::string(to_string(f)), std::string(to_string(mt)), fmt(s.n), fmt(s.bias),
                             fmt(s.iqr), fmt(s.q1), fmt(s.q3)});
          }
  return text;
}

std::string train_log_csv(const ExperimentResult& r) {
  std::string text = csv_row({"fold", "method", "epoch", "train_loss", "val_loss"});
  for (const auto& t : r.train_log)
    text += csv_row({std::to_string(t.fold), t.method, std::to_string(t.epoch), fmt(t.train_loss),
                     std::isnan(t.val_loss) ? std::string() : fmt(t.val_loss)});
  return text;
}

const std::vector<std::string> kReportFiles = {"event_errors.csv",   "error_stats.csv",
                                               "detection_counts.csv", "features.csv",
                                               "feature_errors.csv", "feature_error_stats.csv",
                                               "train_log.csv"};

void write_reports(const ExperimentResult& r, const std::filesystem::path& dir) {
  const auto fe = feature_error_rows(r);
  write_text_file(dir / "event_errors.csv", event_errors_csv(r));
  write_text_file(dir / "error_stats.csv", error_stats_csv(r));
  write_text_file(dir / "detection_counts.csv", detection_counts_csv(r));
  write_text_file(dir / "features.csv", features_csv(r));
  write_text_file(dir / "feature_errors.csv", feature_errors_csv(fe));
  write_text_file(dir / "feature_error_stats.csv", feature_error_stats_csv(fe));
  write_text_file(dir / "train_log.csv", train_log_csv(r));
}

// ---------------------------------------------------------------------------
// Folds

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{std::uint32_t(base), std::uint32_t(base >> 32), std::uint32_t(a), std::uint32_t(b)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

struct Prepared {
  std::vector<ImuTrial> projected;
  std::vector<Signal2D> targets;
  std::map<FeatureMode, std::vector<Signal2D>> features;
};

struct FoldSplit {
  TrialSplit split;
  std::string label;
};

struct StageFailure {
  int fold = -1;
  std::string stage;
  std::string method;
  std::string error_type;
  std::string message;
  int exit_code = kExitData;
};

struct FoldOutput {
  ExperimentResult result;
  Json info;
  std::optional<StageFailure> failure;
  std::exception_ptr error;
};

std::string error_type(const std::exception_ptr& e, int* code) {
  try {
    std::rethrow_exception(e);
  } catch (const LeakageError&) {
    *code = kExitConfig;
    return "leakage";
  } catch (const ConfigError&) {
    *code = kExitConfig;
    return "config";
  } catch (const NumericalError&) {
    *code = kExitNumerical;
    return "numerical";
  } catch (const DataError&) {
    *code = kExitData;
    return "data";
  } catch (const ContractError&) {
    *code = kExitData;
    return "contract";
  } catch (...) {
    *code = kExitData;
    return "other";
  }
}

std::string what_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

void add_matches(ExperimentResult& out, const std::string& method, int fold, const ImuTrial& trial,
                 const EventSet& est, double window) {
  auto record = [&](const std::string& cls, const MatchResult& m) {
    for (const auto& p : m.matched)
      out.event_errors.push_back({method, fold, trial.trial_id, trial.subject_id, trial.group, trial.condition, cls,
                                  p.ref_time, p.est_time, p.error});
    out.detection_counts.push_back({method, fold, trial.trial_id, trial.group, trial.condition, cls,
                                    m.matched.size(), m.false_positives.size(), m.false_negatives.size()});
  };
  // Left and right merged first, then per class.
  for (bool ic : {true, false})
    record(ic ? "IC" : "FC", match_events(trial.reference_events.merged(ic), est.merged(ic), window));
  for (EventClass c : kEventClasses)
    record(std::string(event_key(c)), match_events(trial.reference_events[c], est[c], window));
}

FoldOutput run_fold(const ExperimentConfig& cfg, const Prepared& prep, int fold, const FoldSplit& fs,
                    std::mutex& log_mutex) {
  FoldOutput out;
  const auto& trials = prep.projected;
  std::string stage = "split", method;
  try {
    check_no_leakage(trials, fs.split);
    if (fs.split.train.empty() || fs.split.validation.empty())
      throw ConfigError("fold " + std::to_string(fold) + " has an empty training or validation set");

    // Inner validation subjects for model selection, drawn from the training side.
    std::vector<std::string> subjects;
    for (std::size_t i : fs.split.train) subjects.push_back(trials[i].subject_id);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    std::set<std::string> inner;
    if (cfg.inner_validation_fraction > 0 && subjects.size() >= 2) {
      const std::size_t n_inner = std::clamp<std::size_t>(
          std::size_t(std::lround(cfg.inner_validation_fraction * double(subjects.size()))), 1,
          subjects.size() - 1);
      std::mt19937_64 rng(derive_seed(cfg.seed, 0x1a, std::uint64_t(fold)));
      std::vector<std::string> order = subjects;
      for (std::size_t k = order.size() - 1; k > 0; --k) std::swap(order[k], order[rng() % (k + 1)]);
      inner.insert(order.begin(), order.begin() + std::ptrdiff_t(n_inner));
    }
    std::vector<std::size_t> fit_idx, inner_idx;
    for (std::size_t i : fs.split.train) (inner.count(trials[i].subject_id) ? inner_idx : fit_idx).push_back(i);

    Json info = {{"fold", fold}, {"label", fs.label}};
    Json val_ids = Json::array(), fit_ids = Json::array(), inner_ids = Json::array();
    for (std::size_t i : fs.split.validation) val_ids.push_back(trials[i].trial_id);
    for (std::size_t i : fit_idx) fit_ids.push_back(trials[i].trial_id);
    for (std::size_t i : inner_idx) inner_ids.push_back(trials[i].trial_id);
    info["validation_trials"] = val_ids;
    info["train_trials"] = fit_ids;
    info["inner_validation_trials"] = inner_ids;
    Json seeds = Json::object();

    for (FeatureMode mode : cfg.modes) {
      method = method_name(mode);
      stage = "train";
      const auto& feats = prep.features.at(mode);
      std::vector<TrainingExample> fit, val;
      for (std::size_t i : fit_idx) fit.push_back({feats[i], prep.targets[i], trials[i].trial_id});
      for (std::size_t i : inner_idx) val.push_back({feats[i], prep.targets[i], trials[i].trial_id});

      GsnConfig mc = cfg.model;
      mc.in_channels = feature_channel_count(mode);
      const std::uint64_t init_seed = derive_seed(cfg.seed, 0x100 + std::uint64_t(mode), fold);
      TrainSpec ts = cfg.train;
      ts.seed = derive_seed(cfg.seed, 0x200 + std::uint64_t(mode), fold);
      seeds[method] = {{"init", init_seed}, {"train", ts.seed}};

      GsnModel model = GsnModel::init(mc, init_seed);
      const TrainReport rep = gsn_train(model, fit, ts, val, [&](int epoch, double tl, double vl) {
        out.result.train_log.push_back({fold, method, epoch, tl, vl});
        if (cfg.verbose) {
          std::lock_guard lock(log_mutex);
          std::fprintf(stderr, "fold %d %s epoch %d train %.5f val %.5f\n", fold, method.c_str(), epoch, tl, vl);
        }
      });
      info[method] = {{"best_epoch", rep.best_epoch},
                      {"best_loss", rep.best_loss},
                      {"stopped_early", rep.stopped_early},
                      {"crop_length", rep.crop_length}};

      for (std::size_t i : fs.split.validation) {
        stage = "infer";
        const Signal2D lik = gsn_forward(std::as_const(model), feats[i]);
        stage = "decode";
        const EventSet est = decode_events(lik, cfg.peaks, trials[i].sample_rate);
        stage = "evaluate";
        add_matches(out.result, method, fold, trials[i], est, cfg.match_window);
        out.result.features.push_back(
            {method, trials[i].trial_id, trials[i].group, trials[i].condition, gait_features(est)});
      }
    }

    if (cfg.run_wt) {
      method = kWtMethod;
      for (std::size_t i : fs.split.validation) {
        stage = "baseline";
        const SideLabels wt = wt_baseline(trials[i], cfg.wt);
        stage = "evaluate";
        add_matches(out.result, method, fold, trials[i], wt.events, cfg.match_window);
        out.result.features.push_back(
            {method, trials[i].trial_id, trials[i].group, trials[i].condition, gait_features(wt.events)});
      }
    }
    method.clear();
    stage = "features";
    for (std::size_t i : fs.split.validation)
      out.result.features.push_back({kReferenceMethod, trials[i].trial_id, trials[i].group, trials[i].condition,
                                     gait_features(trials[i].reference_events)});
    info["seeds"] = seeds;
    out.info = info;
  } catch (...) {
    out.error = std::current_exception();
    StageFailure f;
    f.fold = fold;
    f.stage = stage;
    f.method = method;
    f.error_type = error_type(out.error, &f.exit_code);
    f.message = what_of(out.error);
    out.failure = f;
  }
  return out;
}

std::vector<FoldSplit> make_splits(const ExperimentConfig& cfg, const std::vector<ImuTrial>& trials, Json& plan_j) {
  std::vector<FoldSplit> out;
  if (!cfg.splits.empty()) {
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < trials.size(); ++i) by_id[trials[i].trial_id] = i;
    auto resolve = [&](const std::vector<std::string>& ids) {
      std::vector<std::size_t> idx;
      for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ConfigError("splits: unknown trial id " + id);
        idx.push_back(it->second);
      }
      return idx;
    };
    for (std::size_t s = 0; s < cfg.splits.size(); ++s)
      out.push_back({{resolve(cfg.splits[s].first), resolve(cfg.splits[s].second)}, "explicit"});
    plan_j = "explicit";
    return out;
  }
  std::vector<std::string> subjects;
  for (const auto& t : trials) subjects.push_back(t.subject_id);
  const FoldPlan plan = plan_folds(subjects, cfg.folds, derive_seed(cfg.seed, 0xf01d));
  plan_j = Json::object();
  for (const auto& [s, f] : plan.assignment) plan_j[s] = f;
  for (int f = 0; f < plan.k; ++f) out.push_back({split_for_fold(trials, plan, f), "grouped"});
  return out;
}

Json failure_json(const StageFailure& f) {
  return {{"fold", f.fold},
          {"stage", f.stage},
          {"method", f.method},
          {"error_type", f.error_type},
          {"message", f.message}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<ImuTrial>& trials,
                                const std::filesystem::path& out_dir) {
  ExperimentResult result;
  Json manifest = {{"version", kVersion},
                   {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                         "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"config", config.to_json()},
                   {"config_hash", fnv1a_hex(config.to_json().dump())},
                   {"seed", config.seed},
                   {"n_trials", trials.size()},
                   {"report_files", kReportFiles}};

  auto fail = [&](const StageFailure& f, std::exception_ptr e) {
    manifest["status"] = "failed";
    manifest["failure"] = failure_json(f);
    write_reports(result, out_dir);
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
    std::rethrow_exception(e);
  };

  Prepared prep;
  StageFailure pre;
  pre.stage = "prepare";
  std::vector<FoldSplit> splits;
  try {
    if (trials.empty()) throw DataError("experiment: no trials");
    Json plan_j;
    splits = make_splits(config, trials, plan_j);
    manifest["fold_plan"] = plan_j;
    // Leakage is checked before any work is done.
    pre.stage = "split";
    for (const auto& s : splits) check_no_leakage(trials, s.split);

    pre.stage = "project";
    for (const auto& t : trials) {
      t.reference_events.validate();
      prep.projected.push_back(project_to_anatomical(t));
    }
    pre.stage = "features";
    for (FeatureMode m : config.modes) {
      auto& v = prep.features[m];
      for (const auto& t : prep.projected) v.push_back(build_features(t, m).data);
    }
    for (const auto& t : prep.projected)
      prep.targets.push_back(make_targets(t.reference_events, t.n_samples(), t.sample_rate,
                                          config.train.target_sigma).data);
  } catch (...) {
    const auto e = std::current_exception();
    pre.error_type = error_type(e, &pre.exit_code);
    pre.message = what_of(e);
    fail(pre, e);
  }

  const int n_run = config.max_folds > 0 ? std::min<int>(config.max_folds, int(splits.size())) : int(splits.size());
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(n_run));
  std::mutex log_mutex;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int f = next++; f < n_run; f = next++)
      outputs[std::size_t(f)] = run_fold(config, prep, f, splits[std::size_t(f)], log_mutex);
  };
  const int n_threads = std::min(config.threads, std::max(1, n_run));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Single writer: merge in fold order.
  Json folds_j = Json::array();
  for (auto& o : outputs) {
    if (o.failure) {
      manifest["folds"] = folds_j;
      fail(*o.failure, o.error);
    }
    auto& r = o.result;
    result.event_errors.insert(result.event_errors.end(), r.event_errors.begin(), r.event_errors.end());
    result.detection_counts.insert(result.detection_counts.end(), r.detection_counts.begin(),
                                   r.detection_counts.end());
    result.features.insert(result.features.end(), r.features.begin(), r.features.end());
    result.train_log.insert(result.train_log.end(), r.train_log.begin(), r.train_log.end());
    folds_j.push_back(o.info);
  }
  manifest["folds"] = folds_j;
  manifest["status"] = "ok";
  write_reports(result, out_dir);
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  result.manifest = manifest;
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  std::vector<ImuTrial> trials;
  try {
    if (config.data_dir)
      trials = load_cohort(*config.data_dir);
    else
      trials = synth_cohort(config.synth.value_or(SynthSpec{}));
  } catch (...) {
    const auto e = std::current_exception();
    StageFailure f;
    f.stage = "load";
    f.error_type = error_type(e, &f.exit_code);
    f.message = what_of(e);
    Json manifest = {{"version", kVersion},
                     {"config", config.to_json()},
                     {"config_hash", fnv1a_hex(config.to_json().dump())},
                     {"status", "failed"},
                     {"failure", failure_json(f)}};
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
  return run_experiment(config, trials, out_dir);
}

}  // namespace gaitseg
