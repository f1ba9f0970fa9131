// Acceptance criteria. Prints one PASS/FAIL line per criterion; exits nonzero
// if any fails. Criteria can be selected by number on the command line.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gaitseg;
namespace fs = std::filesystem;
using oracle::Mat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst[5] = {0, 0, 0, 0, 0};
  auto track = [&](int op, double e) { worst[op] = std::max(worst[op], e); };
  for (int inst = 0; inst < 50; ++inst) {
    // conv
    {
      const Index n = 1 + Index(rng() % 40), in = 1 + Index(rng() % 4), out = 1 + Index(rng() % 4);
      auto p = ConvParams<double>::zeros(out, in, 3, 1 << (rng() % 5));
      p.weights = oracle::random_matrix(rng, out, in * 3);
      p.bias = oracle::random_matrix(rng, out, 1);
      const Mat x = oracle::random_matrix(rng, in, n), r = oracle::random_matrix(rng, out, n);
      const auto g = conv1d_backward<double>(x, p, r);
      track(0, oracle::relative_error(g.grad_x, oracle::numeric_gradient(
                                                    [&](const Mat& v) { return conv1d_forward<double>(v, p).cwiseProduct(r).sum(); }, x)));
      track(0, oracle::relative_error(g.grad_w, oracle::numeric_gradient(
                                                    [&](const Mat& w) {
                                                      auto q = p;
                                                      q.weights = w;
                                                      return conv1d_forward<double>(x, q).cwiseProduct(r).sum();
                                                    },
                                                    p.weights)));
      track(0, oracle::relative_error(g.grad_b, oracle::numeric_gradient(
                                                    [&](const Mat& b) {
                                                      auto q = p;
                                                      q.bias = b;
                                                      return conv1d_forward<double>(x, q).cwiseProduct(r).sum();
                                                    },
                                                    Mat(p.bias))));
    }
    // batchnorm
    {
      const Index c = 1 + Index(rng() % 4), n = 2 + Index(rng() % 30);
      auto p = BatchNormParams<double>::identity(c);
      p.gamma = oracle::random_matrix(rng, c, 1, 0.5, 2);
      p.beta = oracle::random_matrix(rng, c, 1);
      const Mat x = oracle::random_matrix(rng, c, n, -2, 2), r = oracle::random_matrix(rng, c, n);
      const auto g = batchnorm_backward<double>(x, p, r);
      auto f = [&](const Mat& xx, const Mat& gm, const Mat& bt) {
        auto q = p;
        q.gamma = gm;
        q.beta = bt;
        return batchnorm_forward<double>(xx, q).cwiseProduct(r).sum();
      };
      const Mat gm = p.gamma, bt = p.beta;
      track(1, oracle::relative_error(g.grad_x, oracle::numeric_gradient([&](const Mat& v) { return f(v, gm, bt); }, x)));
      track(1, oracle::relative_error(g.grad_gamma,
                                      oracle::numeric_gradient([&](const Mat& v) { return f(x, v, bt); }, gm)));
      track(1, oracle::relative_error(g.grad_beta,
                                      oracle::numeric_gradient([&](const Mat& v) { return f(x, gm, v); }, bt)));
    }
    // relu, away from the kink
    {
      Mat x = oracle::random_matrix(rng, 3, 20);
      for (Index i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 1e-3) x.data()[i] = 0.5;
      const Mat r = oracle::random_matrix(rng, 3, 20);
      track(2, oracle::relative_error(relu_backward(x, r), oracle::numeric_gradient(
                                                               [&](const Mat& v) { return relu(v).cwiseProduct(r).sum(); }, x)));
    }
    // sigmoid
    {
      const Mat x = oracle::random_matrix(rng, 3, 20, -8, 8), r = oracle::random_matrix(rng, 3, 20);
      track(3, oracle::relative_error(sigmoid_backward(x, r), oracle::numeric_gradient(
                                                                  [&](const Mat& v) { return sigmoid(v).cwiseProduct(r).sum(); }, x)));
    }
    // bce
    {
      const Mat p = oracle::random_matrix(rng, 4, 20, 0.02, 0.98), y = oracle::random_matrix(rng, 4, 20, 0, 1);
      track(4, oracle::relative_error(bce_loss<double>(p, y).grad,
                                      oracle::numeric_gradient([&](const Mat& v) { return bce_loss<double>(v, y).loss; }, p)));
    }
  }
  const double elapsed = seconds_since(t0);
  const double w = *std::max_element(worst, worst + 5);
  std::ostringstream os;
  os << "50 instances x {conv, batchnorm, relu, sigmoid, bce}; worst relative error " << fmt("%.2e", w) << " (limit 1e-4), "
     << fmt("%.1f", elapsed) << " s (limit 60 s)";
  return {w <= 1e-4 && elapsed < 60, os.str()};
}

// ---------------------------------------------------------------------------
// 2. shapes and receptive field

Outcome shapes() {
  const GsnConfig cfg;
  const auto m = GsnModel::init(cfg, 202);
  bool ok = cfg.receptive_radius() == 32;
  for (Index n : {1, 7, 128, 1024, 4096}) {
    const Signal2D y = gsn_forward(m, Signal2D::Random(cfg.in_channels, n));
    ok = ok && y.rows() == 4 && y.cols() == n && y.allFinite();
  }
  const Index n = 257, centre = 128;
  Signal2D base = Signal2D::Zero(cfg.in_channels, n);
  Signal2D hit = base;
  hit.col(centre).setConstant(3.0);
  const Signal2D diff = gsn_logits(m, hit) - gsn_logits(m, base);
  Index lo = n, hi = -1;
  for (Index t = 0; t < n; ++t)
    if (diff.col(t).cwiseAbs().maxCoeff() > 0) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  ok = ok && lo == centre - 32 && hi == centre + 32;
  return {ok, "lengths {1,7,128,1024,4096} preserved; impulse support [" + std::to_string(lo - centre) + ", +" +
                  std::to_string(hi - centre) + "] (expected +-32)"};
}

// ---------------------------------------------------------------------------
// 3. overfit one trial

Outcome overfit() {
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.seed = 11;
  const auto subject = synth_subjects(spec)[0];
  const auto trial = project_to_anatomical(synth_trial(subject, Condition::IW, 12, 128, 5, "overfit"));
  std::vector<TrainingExample> ds{{build_features(trial, FeatureMode::full).data,
                                   make_targets(trial.reference_events, trial.n_samples(), trial.sample_rate).data,
                                   "overfit"}};
  auto model = GsnModel::init(GsnConfig{}, 1);
  TrainSpec ts;
  ts.epochs = 500;
  ts.crop_length = trial.n_samples();
  int reached = -1, train_reached = -1;
  const auto t0 = std::chrono::steady_clock::now();
  gsn_train(model, ds, ts, {}, [&](int epoch, double train_loss, double) {
    if (train_reached < 0 && train_loss < 0.05) train_reached = epoch + 1;
    if (reached < 0 && epoch % 5 == 4 && gsn_evaluate_loss(model, ds) < 0.05) reached = epoch + 1;
  });
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
  const double loss = gsn_evaluate_loss(model, ds);
  const auto est = decode_events(gsn_forward(std::as_const(model), ds[0].features), PeakParams{}, trial.sample_rate);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (EventClass c : kEventClasses) {
    const auto r = match_events(trial.reference_events[c], est[c], 0.040);
    tp += r.matched.size();
    fp += r.false_positives.size();
    fn += r.false_negatives.size();
  }
  const double f1 = 2.0 * double(tp) / double(2 * tp + fp + fn);
  std::ostringstream os;
  os << "train BCE < 0.05 first at epoch " << train_reached << ", eval BCE " << fmt("%.4f", loss)
     << " (< 0.05 first at epoch " << reached << " of 500); F1 at +-40 ms " << fmt("%.4f", f1) << " (tp " << tp
     << ", fp " << fp << ", fn " << fn << "); training " << fmt("%.1f", minutes) << " min";
  return {train_reached > 0 && reached > 0 && loss < 0.05 && f1 >= 0.99 && minutes < 10, os.str()};
}

// ---------------------------------------------------------------------------
// 4 and 5. generalization on held-out subjects, and comparison with the wavelet baseline

double generalization_minutes = 0;

const ExperimentResult& generalization_run() {
  static std::optional<ExperimentResult> result;
  if (!result) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig c;
    c.seed = 1;
    c.folds = 5;
    c.max_folds = 1;
    SynthSpec s;
    s.n_subjects = 25;
    s.seed = 7;
    c.synth = s;
    c.train.epochs = 40;
    c.inner_validation_fraction = 0;
    result = run_experiment(c, testutil::tmp_dir("acceptance_generalization"));
    generalization_minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
  }
  return *result;
}

Outcome generalization() {
  const auto& r = generalization_run();
  const auto& fold = r.manifest["folds"][0];
  // trial ids are "<subject>_<condition>_<n>"
  auto subjects_of = [](const Json& ids) {
    std::set<std::string> out;
    for (const auto& id : ids) {
      const auto s = id.get<std::string>();
      out.insert(s.substr(0, s.find('_')));
    }
    return out;
  };
  const auto train_subjects = subjects_of(fold["train_trials"]);
  const auto val_subjects = subjects_of(fold["validation_trials"]);
  const std::size_t n_train = train_subjects.size();
  bool ok = val_subjects.size() == 5 && n_train == 20;
  for (const auto& v : val_subjects) ok = ok && !train_subjects.count(v);
  std::ostringstream os;
  os << n_train << " train / " << val_subjects.size() << " validation subjects;";
  for (FeatureMode mode : {FeatureMode::full, FeatureMode::l5_only}) {
    for (const char* cls : {"IC", "FC"}) {
      auto errors = select_errors(r, method_name(mode), cls);
      const auto st = error_stats(errors);
      for (double& e : errors) e = std::abs(e);
      const auto abs_st = error_stats(errors);
      ok = ok && st.n > 0 && st.iqr <= 0.07 && abs_st.iqr <= 0.07 && std::abs(st.bias) <= 0.008;
      os << " " << method_name(mode) << " " << cls << " bias " << fmt("%+.4f", st.bias) << " IQR " << fmt("%.4f", st.iqr)
         << " |e| IQR " << fmt("%.4f", abs_st.iqr) << " (n " << st.n << ")";
    }
  }
  ok = ok && generalization_minutes < 60;
  os << "; limits |bias| <= 0.008 s, IQR <= 0.07 s; run " << fmt("%.1f", generalization_minutes) << " min";
  return {ok, os.str()};
}

Outcome versus_wavelet() {
  const auto& r = generalization_run();
  const auto wt = error_stats(select_errors(r, kWtMethod, "FC"));
  bool ok = wt.n > 0;
  std::ostringstream os;
  os << "FC IQR: wt " << fmt("%.4f", wt.iqr);
  for (FeatureMode mode : {FeatureMode::full, FeatureMode::l5_only}) {
    const auto g = error_stats(select_errors(r, method_name(mode), "FC"));
    ok = ok && g.n > 0 && g.iqr < wt.iqr;
    os << ", " << method_name(mode) << " " << fmt("%.4f", g.iqr);
  }
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 6. peak decoding against exhaustive search

Outcome peaks_exhaustive() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0, 1);
  int mismatches = 0, total_peaks = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = 1 + int(rng() % 64);
    const bool quantized = inst % 2 == 1;
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = quantized ? std::floor(u(rng) * 5) / 4 : u(rng);
    PeakParams p;
    p.threshold = 0.2 + 0.5 * u(rng);
    const double rate = 100 + 100 * u(rng);
    p.min_distance = (3 + 5 * u(rng)) / rate;  // gaps of 3 to 8 samples
    const auto got = detect_peak_indices(x, p, rate);
    const auto want = oracle::exhaustive_peaks(x, p.threshold, p.min_distance * rate);
    total_peaks += int(want.size());
    if (got != std::vector<Index>(want.begin(), want.end())) ++mismatches;
  }
  return {mismatches == 0, "1000 traces (half quantized with ties and plateaus), " + std::to_string(total_peaks) +
                               " oracle peaks, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------
// 7. targets decode back to events

Outcome target_round_trip() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0, 1);
  const double rate = 128;
  std::size_t events = 0, fp = 0, fn = 0;
  double worst = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const Index n = 256 + Index(rng() % 3000);
    const double duration = double(n) / rate;
    EventSet ev;
    for (EventClass c : kEventClasses) {
      double t = inst % 7 == 0 ? 0.0 : u(rng);
      while (t <= duration) {
        ev[c].push_back(t);
        t += 0.27 + 1.5 * u(rng);
      }
    }
    const auto dec = decode_events(make_targets(ev, n, rate).data, PeakParams{}, rate);
    for (EventClass c : kEventClasses) {
      const auto m = match_events(ev[c], dec[c], 1.0 / rate);
      events += ev[c].size();
      fp += m.false_positives.size();
      fn += m.false_negatives.size();
      for (const auto& pr : m.matched) worst = std::max(worst, std::abs(pr.error) * rate);
    }
  }
  std::ostringstream os;
  os << "500 event sets, " << events << " events; fp " << fp << ", fn " << fn << ", worst offset " << fmt("%.3f", worst)
     << " samples";
  return {fp == 0 && fn == 0 && worst <= 1.0, os.str()};
}

// ---------------------------------------------------------------------------
// 8. gait feature identities

Outcome gait_identities() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0, 1);
  int violations = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    EventSet ev;
    double l = u(rng), r = l + 0.4 + 0.2 * u(rng);
    const int strides = 2 + int(rng() % 30);
    for (int k = 0; k <= strides; ++k) {
      const double sl = 0.8 + 0.5 * u(rng), sr = 0.8 + 0.5 * u(rng);
      ev.lic.push_back(l);
      ev.ric.push_back(r);
      if (u(rng) > 0.1) ev.lfc.push_back(l + sl * (0.5 + 0.2 * u(rng)));
      if (u(rng) > 0.1) ev.rfc.push_back(r + sr * (0.5 + 0.2 * u(rng)));
      l += sl;
      r += sr;
    }
    const auto g = gait_features(ev);
    for (const auto* side : {&g.left, &g.right})
      for (const auto& c : side->cycles)
        if (std::abs(c.stride - (c.stance + c.swing)) > 1e-12 || c.stance <= 0 || c.swing <= 0) ++violations;
    if (g.stride.average && std::abs(*g.stride.average - (*g.stance.average + *g.swing.average)) > 1e-12) ++violations;
    std::vector<double> strides_all;
    for (const auto* side : {&g.left, &g.right})
      for (const auto& c : side->cycles) strides_all.push_back(c.stride);
    if (strides_all.size() >= 2) {
      const auto [mean, sd] = oracle::mean_sd(strides_all);
      if (std::abs(*g.stride.variability - sd) > 1e-12 || std::abs(*g.stride.average - mean) > 1e-12) ++violations;
    }
    const int expected = int(ev.lic.size() - 1) + int(ev.ric.size() - 1);
    if (int(g.left.cycles.size() + g.right.cycles.size()) + g.left.dropped + g.right.dropped != expected) ++violations;
    for (const auto& e : feature_errors(g, g))
      if (e.error && *e.error != 0) ++violations;
    const auto swapped = gait_features(EventSet{ev.ric, ev.rfc, ev.lic, ev.lfc});
    for (GaitFeature f : kGaitFeatures)
      for (GaitMetric m : kGaitMetrics) {
        const auto a = g.get(f).get(m), b = swapped.get(f).get(m);
        if (a.has_value() != b.has_value() || (a && std::abs(*a - *b) > 1e-12)) ++violations;
      }
  }
  // strictly periodic walking, symmetric between sides
  int periodic_bad = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const double stride = 0.75 + 0.0625 * double(rng() % 8), stance = stride * 0.625, offset = stride / 2;
    EventSet ev;
    const int n = 3 + int(rng() % 20);
    for (int k = 0; k < n; ++k) {
      const double l = 0.25 + stride * k, r = l + offset;
      ev.lic.push_back(l);
      ev.lfc.push_back(l + stance);
      ev.ric.push_back(r);
      ev.rfc.push_back(r + stance);
    }
    const auto g = gait_features(ev);
    for (GaitFeature f : kGaitFeatures) {
      const auto& sum = g.get(f);
      if (!sum.variability || std::abs(*sum.variability) > 1e-12 || !sum.asymmetry || std::abs(*sum.asymmetry) > 1e-12)
        ++periodic_bad;
    }
  }
  violations += periodic_bad;
  return {violations == 0, "1000 random walks: stride = stance + swing, sample SD, cycle accounting, side swap; "
                           "100 periodic walks: variability 0, asymmetry 0; " +
                               std::to_string(violations) + " violations"};
}

// ---------------------------------------------------------------------------
// 9. subject-grouped folds

Outcome folds() {
  std::mt19937_64 rng(909);
  int violations = 0;
  for (int inst = 0; inst < 10000; ++inst) {
    const int k = 2 + int(rng() % 9);
    const int n_subjects = k + int(rng() % 40);
    std::vector<std::string> ids;
    std::vector<ImuTrial> trials;
    for (int s = 0; s < n_subjects; ++s) {
      const std::string id = "S" + std::to_string(rng() % 100000) + "_" + std::to_string(s);
      const int nt = 1 + int(rng() % 3);
      for (int t = 0; t < nt; ++t) {
        ImuTrial tr;
        tr.subject_id = id;
        tr.trial_id = id + "_" + std::to_string(t);
        trials.push_back(std::move(tr));
        ids.push_back(id);
      }
    }
    std::shuffle(trials.begin(), trials.end(), rng);
    const auto plan = plan_folds(ids, k, rng());
    std::size_t smallest = SIZE_MAX, largest = 0;
    for (const auto& f : plan.folds) {
      smallest = std::min(smallest, f.size());
      largest = std::max(largest, f.size());
    }
    if (largest - smallest > 1 || int(plan.assignment.size()) != n_subjects) ++violations;
    std::vector<int> validated(trials.size(), 0);
    for (int f = 0; f < k; ++f) {
      const auto split = split_for_fold(trials, plan, f);
      std::set<std::string> tr, va;
      for (auto i : split.train) tr.insert(trials[i].subject_id);
      for (auto i : split.validation) {
        va.insert(trials[i].subject_id);
        ++validated[i];
      }
      for (const auto& s : va)
        if (tr.count(s)) ++violations;
      if (split.train.size() + split.validation.size() != trials.size()) ++violations;
      try {
        check_no_leakage(trials, split);
      } catch (const LeakageError&) {
        ++violations;
      }
    }
    for (int v : validated)
      if (v != 1) ++violations;
  }

  // the runner must stop on an injected leak, before any training
  bool aborted = false;
  const auto dir = testutil::tmp_dir("acceptance_leak");
  ExperimentConfig c;
  SynthSpec s;
  s.n_subjects = 4;
  s.iw_duration = 6;
  s.cw_duration = 6;
  c.synth = s;
  c.modes = {FeatureMode::l5_only};
  c.model.channels = 4;
  c.train.epochs = 1;
  c.splits = {{{"S01_IW_1", "S02_IW_1", "S02_CW_1"}, {"S01_CW_1", "S03_IW_1"}}};
  try {
    run_experiment(c, dir);
  } catch (const LeakageError&) {
    const auto m = read_json_file(dir / "manifest.json");
    const auto log = testutil::read_file(dir / "train_log.csv");
    aborted = m["status"] == "failed" && std::count(log.begin(), log.end(), '\n') <= 1;
  }
  return {violations == 0 && aborted, "10000 random plans, " + std::to_string(violations) +
                                          " violations; injected leak " + (aborted ? "aborted the run" : "NOT caught")};
}

// ---------------------------------------------------------------------------
// 10. reproducibility

Outcome reproducibility() {
  ExperimentConfig c;
  c.seed = 5;
  c.folds = 2;
  SynthSpec s;
  s.n_subjects = 4;
  s.iw_duration = 8;
  s.cw_duration = 8;
  c.synth = s;
  c.model.channels = 8;
  c.train.epochs = 3;
  c.train.crop_length = 512;
  c.inner_validation_fraction = 0.3;
  const auto a = testutil::tmp_dir("acceptance_repro_a"), b = testutil::tmp_dir("acceptance_repro_b");
  run_experiment(c, a);
  c.threads = 2;
  run_experiment(c, b);
  int differing = 0, compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() != ".csv") continue;
    ++compared;
    if (testutil::read_file(entry.path()) != testutil::read_file(b / entry.path().filename())) ++differing;
  }

  auto model = GsnModel::init(GsnConfig{}, 1010);
  gsn_forward(model, Signal2D::Random(24, 300), Mode::train);
  const auto ck = testutil::tmp_dir("acceptance_ckpt");
  save_checkpoint(model, ck / "a.gsnckpt");
  const auto back = load_checkpoint(ck / "a.gsnckpt");
  save_checkpoint(back, ck / "b.gsnckpt");
  bool exact = back.config == model.config;
  std::vector<double> x, y;
  model.for_each_tensor([&](const std::string&, const auto& t) { x.insert(x.end(), t.data(), t.data() + t.size()); });
  back.for_each_tensor([&](const std::string&, const auto& t) { y.insert(y.end(), t.data(), t.data() + t.size()); });
  exact = exact && x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  exact = exact && testutil::read_file(ck / "a.gsnckpt") == testutil::read_file(ck / "b.gsnckpt");
  return {compared >= 7 && differing == 0 && exact,
          std::to_string(compared) + " report CSVs compared across two runs (1 and 2 threads), " +
              std::to_string(differing) + " differ; checkpoint round trip " + (exact ? "bit-exact" : "NOT exact")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"analytic gradients match finite differences", gradients},
      {"output length and receptive field", shapes},
      {"network overfits a single trial", overfit},
      {"held-out subject timing error", generalization},
      {"final-contact spread below the wavelet baseline", versus_wavelet},
      {"peak decoding equals exhaustive search", peaks_exhaustive},
      {"targets decode back to their events", target_round_trip},
      {"gait feature identities", gait_identities},
      {"subject-grouped folds never leak", folds},
      {"reports and checkpoints are reproducible", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
