#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "../oracles/grad_check.hpp"
#include "../oracles/naive_net.hpp"
#include "palmpipe/cnn.hpp"

using namespace palmpipe;
using namespace palmpipe::cnn;

namespace {

Tensor random_input(const ModelConfig& cfg, int n, std::uint64_t seed) {
  Tensor t({static_cast<std::size_t>(n), static_cast<std::size_t>(cfg.in_channels),
            static_cast<std::size_t>(cfg.grid), static_cast<std::size_t>(cfg.grid)});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : t.data) v = u(rng);
  return t;
}

Labels random_labels(const ModelConfig& cfg, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Labels l;
  for (int i = 0; i < n; ++i) {
    l.angle.push_back(static_cast<int>(rng() % cfg.angle_classes));
    l.position.push_back(static_cast<int>(rng() % cfg.position_classes));
  }
  return l;
}

// Running statistics away from (0, 1) so eval mode is exercised.
void perturb_running(ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (auto* bn : {&p.bn1, &p.bn2}) {
    for (Eigen::Index i = 0; i < bn->running_mean.size(); ++i) {
      bn->running_mean(i) = u(rng) - 0.8;
      bn->running_var(i) = u(rng);
      bn->gamma(i) = u(rng);
      bn->beta(i) = u(rng) - 0.8;
    }
  }
}

double max_diff(const Activations& a, const std::vector<std::vector<double>>& b) {
  double d = 0.0;
  for (Eigen::Index n = 0; n < a.cols(); ++n)
    for (Eigen::Index k = 0; k < a.rows(); ++k) d = std::max(d, std::fabs(a(k, n) - b[n][k]));
  return d;
}

Dataset tiny_dataset(int reps, std::uint64_t seed) {
  SimConfig c;
  c.reps_per_config = reps;
  return generate_dataset(c, seed);
}

std::string checkpoint_bytes(const ModelParams& p) {
  std::ostringstream os;
  write_checkpoint(os, p);
  return os.str();
}

}  // namespace

TEST_CASE("parameter shapes and names") {
  const ModelParams p = init_params({}, 0);
  std::vector<std::string> names;
  std::size_t trainable = 0;
  for_each_param(p, [&](const ParamView& v) {
    names.push_back(v.name);
    if (v.trainable) trainable += v.data.size();
  });
  CHECK(names.front() == "conv1.weight");
  CHECK(p.conv1.weight.rows() == 16);
  CHECK(p.conv1.weight.cols() == 18);
  CHECK(p.conv2.weight.cols() == 144);
  CHECK(p.angle_head[0].weight.cols() == 3200);
  CHECK(p.angle_head[0].weight.rows() == 256);
  CHECK(p.angle_head[3].weight.rows() == 4);
  CHECK(p.pos_head[3].weight.rows() == 3);
  // conv: 16*18+16 + 32*144+32, bn: 2*(16+32), heads: 2 * (3200*256+256 + 256*128+128 + 128*64+64) + 64*4+4 + 64*3+3
  const std::size_t expected = (288 + 16) + (4608 + 32) + 96 + 2 * (819456 + 32896 + 8256) + 260 + 195;
  CHECK(trainable == expected);
}

TEST_CASE("forward matches the loop-by-loop reference") {
  ModelConfig cfg = oracle::small_config();
  ModelParams p = init_params(cfg, 3);
  perturb_running(p, 4);
  const int n = 5;
  const Tensor x = random_input(cfg, n, 5);

  const Logits eval = forward(p, x);
  const auto want_eval = oracle::naive_forward(p, x.data, n, false);
  CHECK(max_diff(eval.angle, want_eval.angle) < 1e-10);
  CHECK(max_diff(eval.position, want_eval.position) < 1e-10);

  ModelParams q = p;
  ForwardCache cache;
  const Logits train = forward(q, x, Mode::Train, &cache);
  const auto want_train = oracle::naive_forward(p, x.data, n, true);
  CHECK(max_diff(train.angle, want_train.angle) < 1e-10);
  CHECK(max_diff(train.position, want_train.position) < 1e-10);
}

TEST_CASE("full-size forward matches the reference") {
  ModelParams p = init_params({}, 8);
  perturb_running(p, 9);
  const Tensor x = random_input(p.config, 2, 10);
  const Logits got = forward(p, x);
  const auto want = oracle::naive_forward(p, x.data, 2, false);
  CHECK(max_diff(got.angle, want.angle) < 1e-9);
  CHECK(max_diff(got.position, want.position) < 1e-9);
}

TEST_CASE("loss matches the definition") {
  const ModelConfig cfg = oracle::small_config();
  const ModelParams p = init_params(cfg, 6);
  const Tensor x = random_input(cfg, 7, 7);
  const Labels l = random_labels(cfg, 7, 8);
  const Logits out = forward(p, x);
  const auto ref = oracle::naive_forward(p, x.data, 7, false);
  const double want = oracle::naive_cross_entropy(ref.angle, l.angle) + oracle::naive_cross_entropy(ref.position, l.position);
  CHECK(loss(out.angle, out.position, l) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("loss is stable for large logits") {
  Activations a(4, 1), b(3, 1);
  a << 1000.0, 0.0, -1000.0, 999.0;
  b << -800.0, -800.0, -800.0;
  Labels l{{0}, {2}};
  const double v = loss(a, b, l);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(std::log1p(std::exp(-1.0)) + std::log(3.0)));
  CHECK_THROWS_AS(loss(a, b, Labels{{4}, {0}}), std::out_of_range);
  CHECK_THROWS_AS(loss(a, b, Labels{{0, 1}, {0, 1}}), std::invalid_argument);
}

TEST_CASE("softmax columns are distributions and shift invariant") {
  Activations z(4, 3);
  z << 1, 2, 3, -1, 0, 1, 5, 5, 5, 0.5, -2, 9;
  const Activations s = softmax(z);
  const Activations t = softmax(z.array() + 123.0);
  for (Eigen::Index n = 0; n < 3; ++n) CHECK(s.col(n).sum() == doctest::Approx(1.0));
  CHECK((s - t).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
  const ModelConfig cfg = oracle::small_config();
  const ModelParams p = init_params(cfg, 12);
  const int n = 5;
  const Activations x = to_activations(random_input(cfg, n, 13), cfg);
  const auto r = oracle::gradient_check(p, x, n, random_labels(cfg, n, 14));
  MESSAGE("checked ", r.checked, " parameters, worst ", r.worst, " rel err ", r.max_rel_error);
  CHECK(r.checked > 500);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("batch norm running statistics") {
  const ModelConfig cfg = oracle::small_config();
  ModelParams p = init_params(cfg, 15);
  const int n = 4;
  const Activations x = to_activations(random_input(cfg, n, 16), cfg);
  ForwardCache c;
  forward_train(p, x, n, c);
  const double m = static_cast<double>(c.z1.cols());
  for (int ch = 0; ch < cfg.conv1_channels; ++ch) {
    const double mean = c.z1.row(ch).mean();
    const double var = (c.z1.row(ch).array() - mean).square().sum() / (m - 1.0);
    CHECK(p.bn1.running_mean(ch) == doctest::Approx(0.1 * mean));
    CHECK(p.bn1.running_var(ch) == doctest::Approx(0.9 + 0.1 * var));
  }
  ModelParams q = init_params(cfg, 15);
  forward_train(q, x, n, c, false);
  CHECK(q.bn1.running_mean.isZero());
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s(0.01, 2, 0.1, 1e-5);
  CHECK(s.step(1.0) == 0.01);
  CHECK(s.step(0.5) == 0.01);
  CHECK(s.step(0.5) == 0.01);       // one bad epoch
  CHECK(s.step(0.49999) == doctest::Approx(0.001));  // below the relative threshold: still bad
  CHECK(s.step(0.4) == doctest::Approx(0.001));
  for (int i = 0; i < 20; ++i) s.step(1.0);
  CHECK(s.lr() == doctest::Approx(1e-5));
}

TEST_CASE("training config validation") {
  TrainConfig t;
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.momentum = 1.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("training is deterministic and learns") {
  const Dataset d = tiny_dataset(2, 1);
  auto [tr, va, te] = split_dataset(d, {}, 2);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 3;
  int calls = 0;
  auto [a, ha] = train(init_params({}, 3), tr, va, tc, [&](const EpochRecord&) { ++calls; });
  auto [b, hb] = train(init_params({}, 3), tr, va, tc);
  CHECK(calls == 2);
  CHECK(checkpoint_bytes(a) == checkpoint_bytes(b));
  REQUIRE(ha.epochs.size() == 2);
  CHECK(ha.epochs[1].train_loss < ha.epochs[0].train_loss);
  CHECK(ha.epochs[0].val_loss == hb.epochs[0].val_loss);
  const Evaluation ev = evaluate(a, te);
  CHECK(ev.angle_accuracy > 0.5);
  std::ostringstream csv;
  ha.write_csv(csv);
  CHECK(csv.str().rfind("epoch,train_loss,val_loss,val_angle_accuracy,val_pos_accuracy,lr\n", 0) == 0);
}

TEST_CASE("single and batched predictions agree") {
  const ModelParams p = init_params({}, 4);
  const Dataset d = tiny_dataset(1, 5);
  std::vector<TactileFrame> frames;
  for (std::size_t i = 0; i < d.size(); i += 37) frames.push_back(d.samples[i].frame);
  const auto batch = predict(p, frames);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Prediction one = predict(p, frames[i]);
    CHECK(one.angle == batch[i].angle);
    CHECK(one.position == batch[i].position);
  }
  const Activations direct = frames_to_activations(frames, p.config);
  const Activations via = to_activations(frames_to_tensor(frames), p.config);
  CHECK((direct - via).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint round-trip is exact") {
  ModelParams p = init_params({}, 6);
  perturb_running(p, 7);
  std::stringstream ss(checkpoint_bytes(p));
  const ModelParams back = read_checkpoint(ss);
  CHECK(checkpoint_bytes(back) == checkpoint_bytes(p));
  CHECK(back.config == p.config);
}

TEST_CASE("checkpoint errors") {
  const ModelParams p = init_params(oracle::small_config(), 1);
  const std::string good = checkpoint_bytes(p);
  {
    std::stringstream ss("not-a-checkpoint\n");
    CHECK_THROWS_AS(read_checkpoint(ss), CheckpointError);
  }
  {
    std::stringstream ss(good.substr(0, good.size() - 12));
    try {
      read_checkpoint(ss);
      FAIL("truncation not detected");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("pos_head.3.bias") != std::string::npos);
    }
  }
  {
    std::stringstream ss(good + "x");
    CHECK_THROWS_AS(read_checkpoint(ss), CheckpointError);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);
  const auto path = std::filesystem::temp_directory_path() / "palmpipe_small.ckpt";
  save_checkpoint(p, path);
  CHECK_NOTHROW(load_checkpoint(path, oracle::small_config()));
  CHECK_THROWS_AS(load_checkpoint(path, ModelConfig{}), CheckpointError);
  std::filesystem::remove(path);
}
