// Sweeps the wavelet scale of the baseline over a synthetic cohort and prints
// the event F1 (left and right merged) for each scale.

#include <cstdio>

#include "CLI11.hpp"

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"

using namespace gaitseg;

int main(int argc, char** argv) {
  CLI::App app{"Wavelet baseline scale calibration"};
  std::filesystem::path spec_path;
  std::vector<double> scales = {6, 8, 10, 12, 14, 16, 18, 20, 24, 28, 32};
  double tolerance = 0.1;
  app.add_option("--spec", spec_path, "Synthetic cohort spec (JSON)")->check(CLI::ExistingFile);
  app.add_option("--scales", scales, "Scales to try, in samples")->delimiter(',');
  app.add_option("--tolerance", tolerance, "Matching tolerance in seconds");
  CLI11_PARSE(app, argc, argv);

  try {
    const SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::from_json(read_json_file(spec_path));
    std::vector<ImuTrial> trials;
    for (const auto& t : synth_cohort(spec)) trials.push_back(project_to_anatomical(t));

    std::printf("%s", csv_row({"cwt_scale", "ic_f1", "fc_f1", "f1", "ic_iqr_s", "fc_iqr_s"}).c_str());
    double best_f1 = -1, best_scale = 0;
    for (double scale : scales) {
      std::size_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
      std::vector<double> errs[2];
      for (const auto& t : trials) {
        const SideLabels wt = wt_baseline(t, WtParams{scale, true});
        for (int k = 0; k < 2; ++k) {
          const MatchResult m =
              match_events(t.reference_events.merged(k == 0), wt.events.merged(k == 0), tolerance);
          tp[k] += m.matched.size();
          fp[k] += m.false_positives.size();
          fn[k] += m.false_negatives.size();
          for (double e : signed_errors(m)) errs[k].push_back(e);
        }
      }
      auto f1 = [](std::size_t a, std::size_t b, std::size_t c) {
        return a == 0 ? 0.0 : 2.0 * double(a) / double(2 * a + b + c);
      };
      const double f = f1(tp[0] + tp[1], fp[0] + fp[1], fn[0] + fn[1]);
      std::printf("%s", csv_row({format_double(scale), format_double(f1(tp[0], fp[0], fn[0]), 4),
                                 format_double(f1(tp[1], fp[1], fn[1]), 4), format_double(f, 4),
                                 format_double(error_stats(errs[0]).iqr, 4),
                                 format_double(error_stats(errs[1]).iqr, 4)})
                           .c_str());
      if (f > best_f1) best_f1 = f, best_scale = scale;
    }
    std::fprintf(stderr, "best scale %g (F1 %.4f)\n", best_scale, best_f1);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
