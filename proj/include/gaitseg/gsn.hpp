#pragma once

// Gait segmentation network: an input convolution followed by a stack of
// dilated residual convolutions and a 1x1 sigmoid head with four outputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitseg/events.hpp"
#include "gaitseg/numcore.hpp"

namespace gaitseg {

struct GsnConfig {
  int in_channels = 24;
  int channels = 128;
  int num_dilated_layers = 5;
  int kernel = 3;
  std::vector<int> dilations = {1, 2, 4, 8, 16};
  int out_events = 4;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;

  /// Samples on each side of an output that can influence it.
  int receptive_radius() const;
  int receptive_field() const { return 2 * receptive_radius() + 1; }

  bool operator==(const GsnConfig&) const = default;
};

/// conv -> batchnorm -> ReLU, plus the (optionally projected) block input.
struct GsnBlock {
  ConvParams<double> conv;
  BatchNormParams<double> bn;
  std::optional<ConvParams<double>> residual_proj;
};

struct GsnModel {
  GsnConfig config;
  GsnBlock input_block;
  std::vector<GsnBlock> dilated_blocks;
  ConvParams<double> head;

  /// All weights zero, batchnorm at identity, running stats at (0, 1).
  static GsnModel zeros(const GsnConfig& config);
  /// Kaiming-uniform convolutions seeded by `seed`; biases zero except the
  /// head, which starts near the sparse target prior.
  static GsnModel init(const GsnConfig& config, std::uint64_t seed);

  void set_mode(Mode mode);

  /// Visits every trainable tensor as (name, tensor&) in a fixed order.
  template <typename F>
  void for_each_parameter(F&& f);
  template <typename F>
  void for_each_parameter(F&& f) const;

  /// Trainable tensors plus batchnorm running statistics.
  template <typename F>
  void for_each_tensor(F&& f);
  template <typename F>
  void for_each_tensor(F&& f) const;

  std::size_t parameter_count() const;
};

/// Train mode uses batch statistics and updates the running estimates.
Signal2D gsn_forward(GsnModel& model, const Signal2D& x, Mode mode);
/// Eval-mode forward on a frozen model; safe to call concurrently.
Signal2D gsn_forward(const GsnModel& model, const Signal2D& x);

/// Logits before the sigmoid head, eval mode.
Signal2D gsn_logits(const GsnModel& model, const Signal2D& x);

struct GsnLossAndGrad {
  double loss = 0;
  GsnModel grad;  // same layout as the model; running stats unused
};

/// Train-mode forward + BCE + backward over `x` treated as back-to-back
/// sequences of length `segment` (0: one sequence). Updates running stats.
GsnLossAndGrad gsn_loss_and_grad(GsnModel& model, const Signal2D& x, const Signal2D& target,
                                 Index segment = 0);

struct TrainSpec {
  int epochs = 40;
  Index crop_length = 1024;
  int batch_size = 4;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  double target_sigma = kDefaultTargetSigma;
  int patience = 0;  // 0 disables early stopping
};

struct TrainingExample {
  Signal2D features;
  Signal2D targets;
  std::string id;
};

struct TrainReport {
  std::vector<double> train_loss;  // mean batch loss per epoch
  std::vector<double> val_loss;    // empty without a validation set
  int best_epoch = -1;
  double best_loss = 0;
  bool stopped_early = false;
  Index crop_length = 0;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Adam on random equal-length crops. The model ends at the epoch with the
/// lowest validation loss (training loss when no validation set is given).
TrainReport gsn_train(GsnModel& model, std::span<const TrainingExample> dataset,
                      const TrainSpec& spec, std::span<const TrainingExample> validation = {},
                      const EpochCallback& on_epoch = {});

/// Mean eval-mode BCE over full-length examples, weighted by sample count.
double gsn_evaluate_loss(const GsnModel& model, std::span<const TrainingExample> examples);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr char kCheckpointMagic[] = "GSNCKPT1";

void save_checkpoint(const GsnModel& model, const std::filesystem::path& path);
GsnModel load_checkpoint(const std::filesystem::path& path);
/// Also throws ConfigError when the stored config differs from `expected`.
GsnModel load_checkpoint(const std::filesystem::path& path, const GsnConfig& expected);

// ---------------------------------------------------------------------------

namespace detail {

template <typename Model, typename F>
void visit_block(Model& block, const std::string& prefix, bool running, F& f) {
  f(prefix + ".conv.weight", block.conv.weights);
  f(prefix + ".conv.bias", block.conv.bias);
  f(prefix + ".bn.gamma", block.bn.gamma);
  f(prefix + ".bn.beta", block.bn.beta);
  if (running) {
    f(prefix + ".bn.running_mean", block.bn.running_mean);
    f(prefix + ".bn.running_var", block.bn.running_var);
  }
  if (block.residual_proj) {
    f(prefix + ".proj.weight", block.residual_proj->weights);
    f(prefix + ".proj.bias", block.residual_proj->bias);
  }
}

template <typename Model, typename F>
void visit_model(Model& m, bool running, F& f) {
  visit_block(m.input_block, "input", running, f);
  for (std::size_t i = 0; i < m.dilated_blocks.size(); ++i)
    visit_block(m.dilated_blocks[i], "block" + std::to_string(i), running, f);
  f(std::string("head.weight"), m.head.weights);
  f(std::string("head.bias"), m.head.bias);
}

}  // namespace detail

template <typename F>
void GsnModel::for_each_parameter(F&& f) {
  detail::visit_model(*this, false, f);
}
template <typename F>
void GsnModel::for_each_parameter(F&& f) const {
  detail::visit_model(*this, false, f);
}
template <typename F>
void GsnModel::for_each_tensor(F&& f) {
  detail::visit_model(*this, true, f);
}
template <typename F>
void GsnModel::for_each_tensor(F&& f) const {
  detail::visit_model(*this, true, f);
}

}  // namespace gaitseg
