// gaitseg command line: synth, train, infer, decode, baseline, features,
// evaluate, experiment.

#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <utility>

#include "CLI11.hpp"

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"

namespace fs = std::filesystem;
using namespace gaitseg;

namespace {

FeatureMode mode_for_channels(int in_channels) {
  for (FeatureMode m : {FeatureMode::full, FeatureMode::l5_only})
    if (feature_channel_count(m) == in_channels) return m;
  throw ConfigError("checkpoint expects " + std::to_string(in_channels) +
                    " input channels, which matches no feature mode");
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::from_json(read_json_file(spec_path));
  const auto trials = synth_cohort(spec);
  save_cohort(trials, out);
  write_text_file(out / "synth_spec.json", spec.to_json().dump(2) + "\n");
  std::printf("wrote %zu trials to %s\n", trials.size(), out.string().c_str());
  return kExitOk;
}

struct TrainArgs {
  fs::path data, out;
  int folds = 5;
  int max_folds = 0;
  std::uint64_t seed = 1;
  std::string mode = "full";
  int epochs = TrainSpec{}.epochs;
  int channels = GsnConfig{}.channels;
  Index crop_length = TrainSpec{}.crop_length;
  double lr = TrainSpec{}.lr;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  const FeatureMode mode = parse_feature_mode(a.mode);
  const auto trials = load_cohort(a.data);
  if (a.folds < 1) throw ConfigError("--folds must be >= 1");

  GsnConfig mc;
  mc.channels = a.channels;
  mc.in_channels = feature_channel_count(mode);
  mc.validate();
  TrainSpec ts;
  ts.epochs = a.epochs;
  ts.crop_length = a.crop_length;
  ts.lr = a.lr;

  std::vector<TrainingExample> all;
  for (const auto& t : trials) {
    const ImuTrial p = project_to_anatomical(t);
    all.push_back({build_features(p, mode).data,
                   make_targets(p.reference_events, p.n_samples(), p.sample_rate, ts.target_sigma).data,
                   t.trial_id});
  }

  std::string log = csv_row({"fold", "epoch", "train_loss"});
  auto train_on = [&](const std::vector<std::size_t>& idx, int fold, const fs::path& ckpt) {
    std::vector<TrainingExample> ds;
    for (std::size_t i : idx) ds.push_back(all[i]);
    GsnModel model = GsnModel::init(mc, a.seed + std::uint64_t(fold) * 7919);
    ts.seed = a.seed + std::uint64_t(fold);
    gsn_train(model, ds, ts, {}, [&](int epoch, double tl, double) {
      log += csv_row({std::to_string(fold), std::to_string(epoch), format_double(tl)});
      if (a.verbose) std::fprintf(stderr, "fold %d epoch %d train %.5f\n", fold, epoch, tl);
    });
    save_checkpoint(model, ckpt);
    std::printf("saved %s\n", ckpt.string().c_str());
  };

  if (a.folds == 1) {
    std::vector<std::size_t> idx(trials.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    train_on(idx, 0, a.out / "model.gsnckpt");
  } else {
    std::vector<std::string> subjects;
    for (const auto& t : trials) subjects.push_back(t.subject_id);
    const FoldPlan plan = plan_folds(subjects, a.folds, a.seed);
    Json plan_j = Json::object();
    for (const auto& [s, f] : plan.assignment) plan_j[s] = f;
    write_text_file(a.out / "fold_plan.json", plan_j.dump(2) + "\n");
    const int n = a.max_folds > 0 ? std::min(a.max_folds, plan.k) : plan.k;
    for (int f = 0; f < n; ++f) {
      const TrialSplit split = split_for_fold(trials, plan, f);
      check_no_leakage(trials, split);
      train_on(split.train, f, a.out / ("fold" + std::to_string(f) + ".gsnckpt"));
    }
  }
  write_text_file(a.out / "train_log.csv", log);
  return kExitOk;
}

int cmd_infer(const fs::path& ckpt, const fs::path& trial_path, const fs::path& out,
              const fs::path& likelihoods_out, const PeakParams& peaks) {
  const GsnModel model = load_checkpoint(ckpt);
  const FeatureMode mode = mode_for_channels(model.config.in_channels);
  const ImuTrial trial = project_to_anatomical(load_trial(trial_path));
  const FeatureTensor feats = build_features(trial, mode);
  for (const auto& w : feats.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const Signal2D lik = gsn_forward(model, feats.data);
  if (!lik.allFinite()) throw NumericalError("infer: non-finite likelihoods");
  if (!likelihoods_out.empty()) save_likelihoods(lik, trial.sample_rate, likelihoods_out);
  save_events(decode_events(lik, peaks, trial.sample_rate), out);
  return kExitOk;
}

int cmd_decode(const fs::path& lik_path, const fs::path& out, const PeakParams& peaks) {
  double rate = 0;
  const Signal2D lik = load_likelihoods(lik_path, &rate);
  save_events(decode_events(lik, peaks, rate), out);
  return kExitOk;
}

int cmd_baseline(const fs::path& trial_path, const fs::path& out, const WtParams& params) {
  const ImuTrial trial = project_to_anatomical(load_trial(trial_path));
  const SideLabels labels = wt_baseline(trial, params);
  if (!labels.sides_known) std::fprintf(stderr, "warning: no ankle data; side labels alternate arbitrarily\n");
  save_events(labels.events, out);
  return kExitOk;
}

struct TrialLabels {
  std::string trial_id, group, condition;
};

// Labels for the feature tables: a trial sidecar given as the reference
// supplies them; otherwise the events file name is the trial id.
TrialLabels trial_labels(const fs::path& events_path, const fs::path& ref_path) {
  TrialLabels l{events_path.stem().string(), "", ""};
  if (ref_path.empty()) return l;
  const Json j = read_json_file(ref_path);
  if (!j.is_object() || !j.contains("reference_events")) return l;
  l.trial_id = j.value("trial_id", l.trial_id);
  l.group = j.value("group", "");
  l.condition = j.value("condition", "");
  return l;
}

std::string feature_table(const TrialLabels& l, const GaitFeatureSet& g) {
  std::string text = csv_row({"trial_id", "group", "condition", "feature", "average", "variability", "asymmetry"});
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (GaitFeature f : kGaitFeatures) {
    const FeatureSummary& s = g.get(f);
    text += csv_row({l.trial_id, l.group, l.condition, std::string(to_string(f)), cell(s.average),
                     cell(s.variability), cell(s.asymmetry)});
  }
  return text;
}

int cmd_features(const fs::path& events_path, const fs::path& out, const fs::path& ref_path,
                 const fs::path& errors_out) {
  const TrialLabels labels = trial_labels(events_path, ref_path);
  const GaitFeatureSet g = gait_features(load_events(events_path));
  write_text_file(out, feature_table(labels, g));
  if (!ref_path.empty()) {
    const GaitFeatureSet ref = gait_features(load_events(ref_path));
    std::string text = csv_row({"trial_id", "group", "condition", "feature", "metric", "error"});
    for (const auto& e : feature_errors(g, ref))
      text += csv_row({labels.trial_id, labels.group, labels.condition, std::string(to_string(e.feature)),
                       std::string(to_string(e.metric)), e.error ? format_double(*e.error) : ""});
    fs::path path = errors_out;
    if (path.empty()) path = fs::path(out).replace_extension("").string() + "_errors.csv";
    write_text_file(path, text);
  }
  return kExitOk;
}

int cmd_evaluate(const fs::path& est_path, const fs::path& ref_path, double window, const fs::path& out) {
  const EventSet est = load_events(est_path);
  const EventSet ref = load_events(ref_path);
  std::string text = csv_row({"event_class", "ref_time_s", "est_time_s", "error_s"});
  std::string summary = csv_row({"event_class", "matched", "false_positives", "false_negatives", "bias_s", "iqr_s"});
  auto add = [&](const std::string& cls, const MatchResult& m) {
    for (const auto& p : m.matched)
      text += csv_row({cls, format_double(p.ref_time), format_double(p.est_time), format_double(p.error)});
    const ErrorStats s = error_stats(signed_errors(m));
    summary += csv_row({cls, std::to_string(m.matched.size()), std::to_string(m.false_positives.size()),
                        std::to_string(m.false_negatives.size()), format_double(s.bias), format_double(s.iqr)});
  };
  for (bool ic : {true, false}) add(ic ? "IC" : "FC", match_events(ref.merged(ic), est.merged(ic), window));
  for (EventClass c : kEventClasses) add(std::string(event_key(c)), match_events(ref[c], est[c], window));
  write_text_file(out, text);
  std::fputs(summary.c_str(), stdout);
  return kExitOk;
}

int cmd_experiment(const fs::path& config_path, const fs::path& out, bool verbose, int threads) {
  ExperimentConfig cfg = ExperimentConfig::from_json(read_json_file(config_path));
  if (verbose) cfg.verbose = true;
  if (threads > 0) cfg.threads = threads;
  // Relative data directories are resolved against the config file.
  if (cfg.data_dir && cfg.data_dir->is_relative()) cfg.data_dir = config_path.parent_path() / *cfg.data_dir;
  const ExperimentResult r = run_experiment(cfg, out);
  for (const char* cls : {"IC", "FC"}) {
    std::vector<std::string> methods;
    for (FeatureMode m : cfg.modes) methods.push_back(method_name(m));
    if (cfg.run_wt) methods.push_back(kWtMethod);
    for (const auto& m : methods) {
      const ErrorStats s = error_stats(select_errors(r, m, cls));
      std::printf("%-9s %s n=%zu bias=%.4f s iqr=%.4f s\n", m.c_str(), cls, s.n, s.bias, s.iqr);
    }
  }
  return kExitOk;
}

int exit_code_for(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return kExitConfig;
  } catch (const NumericalError& ex) {
    std::fprintf(stderr, "numerical failure: %s\n", ex.what());
    return kExitNumerical;
  } catch (const DataError& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return kExitData;
  } catch (const ContractError& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return kExitData;
  } catch (const Json::exception& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return kExitData;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gait event segmentation from inertial sensors"};
  app.require_subcommand(1);

  fs::path spec_path, out, data, ckpt, trial, lik_path, est, ref, config, lik_out;
  PeakParams peaks;
  WtParams wt;
  double window = 0.5;
  TrainArgs ta;
  bool verbose = false;
  int threads = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("--spec", spec_path, "Synthetic cohort spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one model per fold");
  train->add_option("--data", ta.data, "Directory of trials")->required();
  train->add_option("--folds", ta.folds, "Number of subject-grouped folds (1 trains on everything)");
  train->add_option("--max-folds", ta.max_folds, "Train only the first N folds");
  train->add_option("--seed", ta.seed);
  train->add_option("--mode", ta.mode, "full | l5_only");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--channels", ta.channels);
  train->add_option("--crop-length", ta.crop_length);
  train->add_option("--lr", ta.lr);
  train->add_flag("--verbose", ta.verbose);
  train->add_option("--out", ta.out, "Checkpoint directory")->required();

  auto* infer = app.add_subcommand("infer", "Run a checkpoint on one trial");
  infer->add_option("--ckpt", ckpt)->required();
  infer->add_option("--trial", trial)->required();
  infer->add_option("--out", out, "Events JSON")->required();
  infer->add_option("--likelihoods", lik_out, "Also write the likelihood traces (CSV)");
  infer->add_option("--threshold", peaks.threshold);
  infer->add_option("--min-distance", peaks.min_distance);

  auto* decode = app.add_subcommand("decode", "Decode likelihood traces into events");
  decode->add_option("--likelihoods", lik_path)->required();
  decode->add_option("--threshold", peaks.threshold);
  decode->add_option("--min-distance", peaks.min_distance);
  decode->add_option("--out", out)->required();

  auto* baseline = app.add_subcommand("baseline", "Wavelet baseline on one trial");
  baseline->add_option("--trial", trial)->required();
  baseline->add_option("--cwt-scale", wt.cwt_scale, "Wavelet scale in samples");
  baseline->add_option("--out", out)->required();

  auto* features = app.add_subcommand("features", "Gait features from an events file");
  features->add_option("--events", est)->required();
  features->add_option("--out", out)->required();
  features->add_option("--ref", ref, "Reference events; also writes signed feature errors");
  features->add_option("--errors", lik_out, "Feature error CSV (default: <out>_errors.csv)");

  auto* evaluate = app.add_subcommand("evaluate", "Match estimated against reference events");
  evaluate->add_option("--est", est)->required();
  evaluate->add_option("--ref", ref, "Reference events or trial sidecar")->required();
  evaluate->add_option("--window", window);
  evaluate->add_option("--out", out)->required();

  auto* experiment = app.add_subcommand("experiment", "Full cross-validation run");
  experiment->add_option("--config", config)->required();
  experiment->add_option("--out", out)->required();
  experiment->add_option("--threads", threads);
  experiment->add_flag("--verbose", verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(spec_path, out);
    if (*train) return cmd_train(ta);
    if (*infer) return cmd_infer(ckpt, trial, out, lik_out, peaks);
    if (*decode) return cmd_decode(lik_path, out, peaks);
    if (*baseline) return cmd_baseline(trial, out, wt);
    if (*features) return cmd_features(est, out, ref, lik_out);
    if (*evaluate) return cmd_evaluate(est, ref, window, out);
    if (*experiment) return cmd_experiment(config, out, verbose, threads);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
  return kExitConfig;
}
