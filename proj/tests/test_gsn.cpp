#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "gaitseg/errors.hpp"
#include "gaitseg/gsn.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gaitseg;
namespace fs = std::filesystem;
using testutil::tmp_dir;

namespace {

GsnConfig small_config(int in = 3, int ch = 4, int layers = 2) {
  GsnConfig c;
  c.in_channels = in;
  c.channels = ch;
  c.num_dilated_layers = layers;
  c.dilations.clear();
  for (int i = 0; i < layers; ++i) c.dilations.push_back(1 << i);
  return c;
}

std::vector<double*> scalar_handles(GsnModel& m) {
  std::vector<double*> out;
  m.for_each_parameter([&](const std::string&, auto& t) {
    for (Index i = 0; i < t.size(); ++i) out.push_back(t.data() + i);
  });
  return out;
}

std::vector<double> flatten(const GsnModel& m) {
  std::vector<double> out;
  m.for_each_tensor([&](const std::string&, const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
  return out;
}

}  // namespace

TEST_CASE("GsnConfig: defaults, receptive field, validation") {
  GsnConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.receptive_radius() == 32);
  CHECK(c.receptive_field() == 65);

  auto bad = c;
  bad.kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.dilations = {1, 2, 4, 8};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.dilations = {1, 2, 4, 8, 15};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.out_events = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.channels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero model outputs one half everywhere") {
  const auto m = GsnModel::zeros(small_config());
  const Signal2D y = gsn_forward(m, Signal2D::Random(3, 40));
  CHECK(y.rows() == 4);
  CHECK(y.cols() == 40);
  CHECK((y.array() == 0.5).all());
}

TEST_CASE("residual path passes the input through zeroed blocks") {
  auto m = GsnModel::zeros(small_config(4, 4, 3));
  m.head.weights.setZero();
  m.head.weights(0, 0) = 1;
  std::mt19937_64 rng(2);
  const Signal2D x = oracle::random_matrix(rng, 4, 30);
  const Signal2D logits = gsn_logits(m, x);
  CHECK((logits.row(0) - x.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("output length equals input length, including a single sample") {
  const auto m = GsnModel::init(small_config(), 3);
  for (Index n : {1, 2, 7, 65, 200}) {
    const Signal2D y = gsn_forward(m, Signal2D::Random(3, n));
    CHECK(y.cols() == n);
    CHECK(y.rows() == 4);
    CHECK((y.array() > 0).all());
    CHECK((y.array() < 1).all());
  }
  CHECK_THROWS_AS(gsn_forward(m, Signal2D::Random(2, 10)), ContractError);
}

TEST_CASE("impulse response is confined to the receptive field") {
  GsnConfig c = small_config(2, 6, 5);
  const auto m = GsnModel::init(c, 17);
  const Index n = 161, centre = 80;
  Signal2D base = Signal2D::Constant(2, n, 0.1);
  Signal2D hit = base;
  hit.col(centre).setConstant(5.0);
  const Signal2D diff = gsn_logits(m, hit) - gsn_logits(m, base);
  const int r = c.receptive_radius();
  CHECK(r == 32);
  Index lo = n, hi = -1;
  for (Index t = 0; t < n; ++t)
    if (diff.col(t).cwiseAbs().maxCoeff() > 0) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  CHECK(lo == centre - r);
  CHECK(hi == centre + r);
}

TEST_CASE("initial head bias sits near the sparse target prior") {
  const auto m = GsnModel::init(GsnConfig{}, 1);
  CHECK((m.head.bias.array() == -3.0).all());
  CHECK(m.dilated_blocks.size() == 5);
  CHECK(m.parameter_count() > 0);
}

TEST_CASE("eval forward does not touch running statistics") {
  auto m = GsnModel::init(small_config(), 5);
  const auto before = flatten(m);
  const Signal2D x = Signal2D::Random(3, 50);
  const Signal2D a = gsn_forward(m, x), b = gsn_forward(m, x);
  CHECK(a == b);
  CHECK(flatten(m) == before);
  gsn_forward(m, x, Mode::train);
  CHECK(flatten(m) != before);
}

TEST_CASE("gsn_loss_and_grad matches finite differences") {
  std::mt19937_64 rng(41);
  for (int inst = 0; inst < 4; ++inst) {
    auto m = GsnModel::init(small_config(2, 3, 2), 100 + std::uint64_t(inst));
    for (auto* h : scalar_handles(m)) *h += 0.05 * std::uniform_real_distribution<double>(-1, 1)(rng);
    const Index n = 16;
    const Signal2D x = oracle::random_matrix(rng, 2, 2 * n);
    const Signal2D y = oracle::random_matrix(rng, 4, 2 * n, 0, 1);
    const auto lg = gsn_loss_and_grad(m, x, y, n);
    auto grad_model = lg.grad;
    const auto gh = scalar_handles(grad_model);
    auto handles = scalar_handles(m);
    Eigen::VectorXd analytic(Index(handles.size())), numeric(Index(handles.size()));
    for (std::size_t k = 0; k < handles.size(); ++k) {
      const double orig = *handles[k];
      const double h = 1e-6;
      *handles[k] = orig + h;
      const double fp = gsn_loss_and_grad(m, x, y, n).loss;
      *handles[k] = orig - h;
      const double fm = gsn_loss_and_grad(m, x, y, n).loss;
      *handles[k] = orig;
      numeric(Index(k)) = (fp - fm) / (2 * h);
      analytic(Index(k)) = *gh[k];
    }
    CHECK(oracle::relative_error(analytic, numeric) <= 1e-4);
  }
}

TEST_CASE("gsn_train: empty dataset and bad spec are configuration errors") {
  auto m = GsnModel::init(small_config(), 1);
  TrainSpec spec;
  CHECK_THROWS_AS(gsn_train(m, {}, spec), ConfigError);
  std::vector<TrainingExample> data{{Signal2D::Random(3, 64), Signal2D::Zero(4, 64), "a"}};
  spec.epochs = 0;
  CHECK_THROWS_AS(gsn_train(m, data, spec), ConfigError);
}

TEST_CASE("gsn_train is deterministic for a fixed seed and lowers the loss") {
  std::mt19937_64 rng(8);
  std::vector<TrainingExample> data;
  for (int i = 0; i < 3; ++i) {
    Signal2D t = Signal2D::Zero(4, 96);
    t(i, 30) = 1;
    t(3, 60) = 1;
    data.push_back({oracle::random_matrix(rng, 3, 96), t, "ex" + std::to_string(i)});
  }
  TrainSpec spec;
  spec.epochs = 15;
  spec.crop_length = 64;
  spec.batch_size = 2;
  spec.seed = 4;
  spec.lr = 1e-2;
  auto a = GsnModel::init(small_config(), 9), b = GsnModel::init(small_config(), 9);
  const auto ra = gsn_train(a, data, spec);
  const auto rb = gsn_train(b, data, spec);
  CHECK(flatten(a) == flatten(b));
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.train_loss.size() == 15);
  CHECK(ra.train_loss.back() < ra.train_loss.front());
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = tmp_dir("ckpt");
  auto m = GsnModel::init(small_config(3, 5, 3), 77);
  gsn_forward(m, Signal2D::Random(3, 40), Mode::train);
  save_checkpoint(m, dir / "m.gsnckpt");
  const auto back = load_checkpoint(dir / "m.gsnckpt");
  CHECK(back.config == m.config);
  const auto fa = flatten(m), fb = flatten(back);
  REQUIRE(fa.size() == fb.size());
  CHECK(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0);
  const Signal2D x = Signal2D::Random(3, 33);
  CHECK(gsn_forward(m, x) == gsn_forward(back, x));
  CHECK_NOTHROW(load_checkpoint(dir / "m.gsnckpt", m.config));
}

TEST_CASE("checkpoint errors: truncation, bad magic, config mismatch, missing file") {
  const auto dir = tmp_dir("ckpt_err");
  auto m = GsnModel::init(small_config(), 3);
  save_checkpoint(m, dir / "m.gsnckpt");
  const auto size = fs::file_size(dir / "m.gsnckpt");

  fs::copy_file(dir / "m.gsnckpt", dir / "trunc.gsnckpt");
  fs::resize_file(dir / "trunc.gsnckpt", size - 9);
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.gsnckpt"), DataError);

  fs::copy_file(dir / "m.gsnckpt", dir / "magic.gsnckpt");
  {
    std::fstream f(dir / "magic.gsnckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.gsnckpt"), DataError);

  auto other = m.config;
  other.channels = 8;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.gsnckpt", other), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.gsnckpt"), DataError);
}
