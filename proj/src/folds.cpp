#include <algorithm>
#include <random>
#include <set>

#include "gaitseg/errors.hpp"
#include "gaitseg/harness.hpp"

namespace gaitseg {

void FoldPlan::verify() const {
  if (int(folds.size()) != k) throw LeakageError("fold plan: expected " + std::to_string(k) + " folds");
  std::set<std::string> seen;
  for (int f = 0; f < k; ++f) {
    for (const auto& s : folds[std::size_t(f)]) {
      if (!seen.insert(s).second) throw LeakageError("fold plan: subject " + s + " is in two folds");
      const auto it = assignment.find(s);
      if (it == assignment.end() || it->second != f)
        throw LeakageError("fold plan: assignment of subject " + s + " disagrees with fold " +
                           std::to_string(f));
    }
  }
  if (seen.size() != assignment.size())
    throw LeakageError("fold plan: folds do not cover every assigned subject");
}

FoldPlan plan_folds(std::vector<std::string> subjects, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("plan_folds: k must be >= 2");
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (int(subjects.size()) < k)
    throw ConfigError("plan_folds: " + std::to_string(subjects.size()) + " subjects cannot fill " +
                      std::to_string(k) + " folds");
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = subjects.size() - 1; i > 0; --i) {
    const std::size_t j = std::size_t(rng() % (i + 1));
    std::swap(subjects[i], subjects[j]);
  }
  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(std::size_t(k));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const int f = int(i % std::size_t(k));
    plan.folds[std::size_t(f)].push_back(subjects[i]);
    plan.assignment[subjects[i]] = f;
  }
  plan.verify();
  return plan;
}

TrialSplit split_for_fold(const std::vector<ImuTrial>& trials, const FoldPlan& plan, int fold) {
  if (fold < 0 || fold >= plan.k) throw ContractError("split_for_fold: fold out of range");
  TrialSplit split;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto it = plan.assignment.find(trials[i].subject_id);
    if (it == plan.assignment.end())
      throw ConfigError("subject " + trials[i].subject_id + " is missing from the fold plan");
    (it->second == fold ? split.validation : split.train).push_back(i);
  }
  return split;
}

void check_no_leakage(const std::vector<ImuTrial>& trials, const TrialSplit& split) {
  std::set<std::string> train;
  for (std::size_t i : split.train) train.insert(trials.at(i).subject_id);
  for (std::size_t i : split.validation) {
    const auto& t = trials.at(i);
    if (train.count(t.subject_id))
      throw LeakageError("subject leakage: " + t.subject_id + " has trials in training and validation (" +
                         t.trial_id + ")");
  }
  std::set<std::size_t> train_idx(split.train.begin(), split.train.end());
  for (std::size_t i : split.validation)
    if (train_idx.count(i)) throw LeakageError("trial " + trials[i].trial_id + " is in both sets");
}

}  // namespace gaitseg
