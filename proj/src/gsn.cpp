#include "gaitseg/gsn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gaitseg/errors.hpp"

namespace gaitseg {

void GsnConfig::validate() const {
  if (in_channels < 1 || channels < 1) throw ConfigError("GSN channel counts must be positive");
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("GSN kernel must be a positive odd integer, got " + std::to_string(kernel));
  if (out_events != 4) throw ConfigError("GSN must have exactly 4 outputs");
  if (num_dilated_layers < 0 || int(dilations.size()) != num_dilated_layers)
    throw ConfigError("GSN needs one dilation per dilated layer (" +
                      std::to_string(num_dilated_layers) + " layers, " +
                      std::to_string(dilations.size()) + " dilations)");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    if (dilations[i] < 1) throw ConfigError("GSN dilations must be >= 1");
    if (i > 0 && dilations[i] != 2 * dilations[i - 1])
      throw ConfigError("GSN dilations must double from layer to layer");
  }
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("bn_momentum must be in (0, 1]");
  if (!(bn_epsilon > 0)) throw ConfigError("bn_epsilon must be positive");
}

int GsnConfig::receptive_radius() const {
  const int half = (kernel - 1) / 2;
  int r = half;  // input convolution, dilation 1
  for (int d : dilations) r += half * d;
  return r;
}

namespace {

GsnBlock zero_block(const GsnConfig& cfg, int in_ch, int dilation) {
  GsnBlock b;
  b.conv = ConvParams<double>::zeros(cfg.channels, in_ch, cfg.kernel, dilation);
  b.bn = BatchNormParams<double>::identity(cfg.channels);
  b.bn.momentum = cfg.bn_momentum;
  b.bn.epsilon = cfg.bn_epsilon;
  if (in_ch != cfg.channels) b.residual_proj = ConvParams<double>::zeros(cfg.channels, in_ch, 1);
  return b;
}

void fill_uniform(Signal2D& w, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
}

}  // namespace

GsnModel GsnModel::zeros(const GsnConfig& config) {
  config.validate();
  GsnModel m;
  m.config = config;
  m.input_block = zero_block(config, config.in_channels, 1);
  for (int d : config.dilations) m.dilated_blocks.push_back(zero_block(config, config.channels, d));
  m.head = ConvParams<double>::zeros(config.out_events, config.channels, 1);
  return m;
}

GsnModel GsnModel::init(const GsnConfig& config, std::uint64_t seed) {
  GsnModel m = zeros(config);
  std::mt19937_64 rng(seed);
  auto init_block = [&](GsnBlock& b) {
    fill_uniform(b.conv.weights, std::sqrt(6.0 / double(b.conv.weights.cols())), rng);
    if (b.residual_proj)
      fill_uniform(b.residual_proj->weights, std::sqrt(3.0 / double(b.residual_proj->weights.cols())), rng);
  };
  init_block(m.input_block);
  for (auto& b : m.dilated_blocks) init_block(b);
  fill_uniform(m.head.weights, std::sqrt(1.0 / double(m.head.weights.cols())), rng);
  m.head.bias.setConstant(-3.0);
  return m;
}

void GsnModel::set_mode(Mode mode) {
  input_block.bn.mode = mode;
  for (auto& b : dilated_blocks) b.bn.mode = mode;
}

std::size_t GsnModel::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, const auto& t) { n += std::size_t(t.size()); });
  return n;
}

namespace {

void check_input(const GsnModel& model, const Signal2D& x) {
  if (x.rows() != model.config.in_channels)
    throw ContractError("GSN expects " + std::to_string(model.config.in_channels) +
                        " input channels, got " + std::to_string(x.rows()));
  if (x.cols() < 1) throw ContractError("GSN input must have at least one sample");
}

struct BlockCache {
  Signal2D input;
  Signal2D pre_bn;
  Signal2D pre_relu;
};

Signal2D residual_branch(const GsnBlock& b, const Signal2D& input, Index segment) {
  if (b.residual_proj) return conv1d_forward<double>(input, *b.residual_proj, segment);
  return input;
}

Signal2D block_train(GsnBlock& b, Signal2D input, Index segment, BlockCache* cache) {
  Signal2D pre_bn = conv1d_forward<double>(input, b.conv, segment);
  b.bn.mode = Mode::train;
  Signal2D pre_relu = batchnorm_forward<double>(pre_bn, b.bn);
  Signal2D out = relu(pre_relu) + residual_branch(b, input, segment);
  if (cache) *cache = {std::move(input), std::move(pre_bn), std::move(pre_relu)};
  return out;
}

Signal2D block_eval(const GsnBlock& b, const Signal2D& input) {
  const Signal2D pre_bn = conv1d_forward<double>(input, b.conv);
  return relu(batchnorm_eval<double>(pre_bn, b.bn)) + residual_branch(b, input, 0);
}

// Returns the gradient w.r.t. the block input; writes parameter gradients into g.
Signal2D block_backward(const GsnBlock& b, const BlockCache& c, const Signal2D& grad_out,
                        Index segment, GsnBlock& g) {
  const Signal2D g_relu = relu_backward(c.pre_relu, grad_out);
  auto bn = batchnorm_backward<double>(c.pre_bn, b.bn, g_relu);
  auto conv = conv1d_backward<double>(c.input, b.conv, bn.grad_x, segment);
  g.conv.weights = std::move(conv.grad_w);
  g.conv.bias = std::move(conv.grad_b);
  g.bn.gamma = std::move(bn.grad_gamma);
  g.bn.beta = std::move(bn.grad_beta);
  Signal2D grad_in = std::move(conv.grad_x);
  if (b.residual_proj) {
    auto proj = conv1d_backward<double>(c.input, *b.residual_proj, grad_out, segment);
    g.residual_proj->weights = std::move(proj.grad_w);
    g.residual_proj->bias = std::move(proj.grad_b);
    grad_in += proj.grad_x;
  } else {
    grad_in += grad_out;
  }
  return grad_in;
}

}  // namespace

Signal2D gsn_logits(const GsnModel& model, const Signal2D& x) {
  check_input(model, x);
  Signal2D h = block_eval(model.input_block, x);
  for (const auto& b : model.dilated_blocks) h = block_eval(b, h);
  return conv1d_forward<double>(h, model.head);
}

Signal2D gsn_forward(const GsnModel& model, const Signal2D& x) {
  return sigmoid(gsn_logits(model, x));
}

Signal2D gsn_forward(GsnModel& model, const Signal2D& x, Mode mode) {
  if (mode == Mode::eval) {
    model.set_mode(Mode::eval);
    return gsn_forward(std::as_const(model), x);
  }
  check_input(model, x);
  Signal2D h = block_train(model.input_block, x, 0, nullptr);
  for (auto& b : model.dilated_blocks) h = block_train(b, std::move(h), 0, nullptr);
  return sigmoid(conv1d_forward<double>(h, model.head));
}

GsnLossAndGrad gsn_loss_and_grad(GsnModel& model, const Signal2D& x, const Signal2D& target,
                                 Index segment) {
  check_input(model, x);
  if (target.rows() != model.config.out_events || target.cols() != x.cols())
    throw ContractError("GSN target must be [4 x " + std::to_string(x.cols()) + "]");

  const std::size_t nb = model.dilated_blocks.size();
  std::vector<BlockCache> caches(nb + 1);
  Signal2D h = block_train(model.input_block, x, segment, &caches[0]);
  for (std::size_t i = 0; i < nb; ++i)
    h = block_train(model.dilated_blocks[i], std::move(h), segment, &caches[i + 1]);
  const Signal2D logits = conv1d_forward<double>(h, model.head, segment);
  const Signal2D pred = sigmoid(logits);
  const auto loss = bce_loss<double>(pred, target);

  GsnLossAndGrad r{loss.loss, GsnModel::zeros(model.config)};
  const Signal2D g_logits = sigmoid_backward(logits, loss.grad);
  auto head = conv1d_backward<double>(h, model.head, g_logits, segment);
  r.grad.head.weights = std::move(head.grad_w);
  r.grad.head.bias = std::move(head.grad_b);
  Signal2D g = std::move(head.grad_x);
  for (std::size_t i = nb; i-- > 0;)
    g = block_backward(model.dilated_blocks[i], caches[i + 1], g, segment, r.grad.dilated_blocks[i]);
  block_backward(model.input_block, caches[0], g, segment, r.grad.input_block);
  return r;
}

double gsn_evaluate_loss(const GsnModel& model, std::span<const TrainingExample> examples) {
  double total = 0;
  double count = 0;
  for (const auto& ex : examples) {
    const Signal2D pred = gsn_forward(model, ex.features);
    const double n = double(pred.size());
    total += bce_loss<double>(pred, ex.targets).loss * n;
    count += n;
  }
  return count > 0 ? total / count : std::numeric_limits<double>::quiet_NaN();
}

namespace {

void check_dataset(const GsnModel& model, std::span<const TrainingExample> data, const char* what) {
  for (const auto& ex : data) {
    if (ex.features.rows() != model.config.in_channels)
      throw ContractError(std::string(what) + " example '" + ex.id + "' has " +
                          std::to_string(ex.features.rows()) + " channels, model expects " +
                          std::to_string(model.config.in_channels));
    if (ex.targets.rows() != 4 || ex.targets.cols() != ex.features.cols())
      throw ContractError(std::string(what) + " example '" + ex.id +
                          "' has targets that do not match its features in length");
  }
}

}  // namespace

TrainReport gsn_train(GsnModel& model, std::span<const TrainingExample> dataset,
                      const TrainSpec& spec, std::span<const TrainingExample> validation,
                      const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ConfigError("gsn_train: the training set is empty");
  if (spec.epochs < 1 || spec.batch_size < 1 || !(spec.lr > 0))
    throw ConfigError("gsn_train: epochs, batch_size and lr must be positive");
  check_dataset(model, dataset, "training");
  check_dataset(model, validation, "validation");

  Index crop = spec.crop_length;
  for (const auto& ex : dataset) crop = std::min(crop, ex.features.cols());
  if (crop <= model.config.receptive_field())
    throw ConfigError("gsn_train: crop length " + std::to_string(crop) +
                      " must exceed the receptive field of " +
                      std::to_string(model.config.receptive_field()) + " samples");

  TrainReport report;
  report.crop_length = crop;
  std::mt19937_64 rng(spec.seed);
  AdamState<double> adam;
  adam.lr = spec.lr;
  GsnModel best = model;
  report.best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const Index in_ch = model.config.in_channels;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::vector<std::pair<std::size_t, Index>> crops;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const Index n = dataset[i].features.cols();
      const Index count = std::max<Index>(1, n / crop);
      std::uniform_int_distribution<Index> start(0, n - crop);
      for (Index c = 0; c < count; ++c) crops.emplace_back(i, start(rng));
    }
    std::shuffle(crops.begin(), crops.end(), rng);

    double loss_sum = 0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < crops.size(); b0 += std::size_t(spec.batch_size)) {
      const std::size_t b1 = std::min(crops.size(), b0 + std::size_t(spec.batch_size));
      const Index width = Index(b1 - b0) * crop;
      Signal2D x(in_ch, width), t(4, width);
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& [i, s] = crops[k];
        x.middleCols(Index(k - b0) * crop, crop) = dataset[i].features.middleCols(s, crop);
        t.middleCols(Index(k - b0) * crop, crop) = dataset[i].targets.middleCols(s, crop);
      }
      auto lg = gsn_loss_and_grad(model, x, t, crop);
      const std::string where =
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
      if (!std::isfinite(lg.loss)) throw NumericalError("gsn_train: non-finite loss at " + where);

      std::vector<const double*> grad_data;
      std::as_const(lg.grad).for_each_parameter(
          [&](const std::string&, const auto& g) { grad_data.push_back(g.data()); });
      std::vector<ParamSlot<double>> slots;
      std::size_t k = 0;
      model.for_each_parameter([&](const std::string& name, auto& p) {
        slots.emplace_back(name, p, Eigen::Map<const FlatArray<double>>(grad_data[k++], p.size()));
      });
      try {
        adam_step<double>(slots, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at " + where);
      }
      loss_sum += lg.loss;
      ++batches;
    }

    const double train_loss = loss_sum / batches;
    report.train_loss.push_back(train_loss);
    double metric = train_loss;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty()) {
      val_loss = gsn_evaluate_loss(model, validation);
      if (!std::isfinite(val_loss))
        throw NumericalError("gsn_train: non-finite validation loss at epoch " + std::to_string(epoch));
      report.val_loss.push_back(val_loss);
      metric = val_loss;
    }
    if (metric < report.best_loss) {
      report.best_loss = metric;
      report.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    if (spec.patience > 0 && since_best >= spec.patience) {
      report.stopped_early = true;
      break;
    }
  }
  model = std::move(best);
  model.set_mode(Mode::eval);
  return report;
}

}  // namespace gaitseg
