/**
 * @file cnn.hpp
 * @brief Two-head tilt/position classifier trained from scratch.
 *
 * Backbone: conv3x3 (pad 1) -> batch norm -> ReLU, twice. The feature map is
 * flattened channel-major and fed to two heads of four affine layers with
 * ReLU between them: one for the 4 tilt classes, one for the 3 positions.
 * The loss is the sum of both heads' mean softmax cross-entropy.
 *
 * Everything runs in double precision. Activations are stored as
 * [channels, batch * pixels] (backbone) and [features, batch] (heads).
 */

#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "palmpipe/confusion.hpp"
#include "palmpipe/sensor_sim.hpp"

namespace palmpipe::cnn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// Column-major activations: one column per (sample, pixel) or per sample.
using Activations = Eigen::MatrixXd;

/// Row-major dense tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  std::size_t numel() const;
};

struct ModelConfig {
  int in_channels = 2;
  int grid = 10;  // square input, grid x grid
  int conv1_channels = 16;
  int conv2_channels = 32;
  std::array<int, 3> head_hidden{256, 128, 64};
  int angle_classes = 4;
  int position_classes = 3;

  int pixels() const { return grid * grid; }
  int flat_features() const { return conv2_channels * pixels(); }
  bool operator==(const ModelConfig&) const = default;
};

struct Conv {
  Matrix weight;  // [out, in * 9], per row laid out (in, ky, kx)
  Vector bias;
};

struct BatchNorm {
  Vector gamma, beta;
  Vector running_mean, running_var;
};

struct Affine {
  Matrix weight;  // [out, in]
  Vector bias;
};

struct ModelParams {
  ModelConfig config;
  Conv conv1;
  BatchNorm bn1;
  Conv conv2;
  BatchNorm bn2;
  std::array<Affine, 4> angle_head;
  std::array<Affine, 4> pos_head;
};

/// Zero-filled parameters of the right shapes (running_var = 1).
ModelParams zeros_like(const ModelConfig& cfg);

/// Fan-in uniform init (bound sqrt(6 / fan_in) for weights, 1/sqrt(fan_in)
/// for biases); gamma = 1, beta = 0, running stats (0, 1).
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Visits every tensor in checkpoint order. `trainable` is false for
/// batch-norm running statistics.
struct ParamView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
  bool trainable;
};
void for_each_param(ModelParams& p, const std::function<void(const ParamView&)>& fn);
void for_each_param(const ModelParams& p, const std::function<void(const ParamView&)>& fn);

enum class Mode { Train, Eval };

struct Logits {
  Activations angle;     // [4, N]
  Activations position;  // [3, N]
};

/// Intermediate values kept by a train-mode forward pass for backward().
struct ForwardCache {
  int batch = 0;
  Activations col1, z1, xhat1, y1, a1;
  Vector invstd1;
  Activations col2, z2, xhat2, y2, a2;
  Vector invstd2;
  Activations flat;
  std::array<Activations, 4> angle_in, pos_in;  // inputs of each affine layer
  std::array<Activations, 3> angle_pre, pos_pre;  // pre-ReLU outputs of layers 0..2
  Logits logits;
};

/// Input as [in_channels, N * pixels] with forces already divided by 9.
Activations to_activations(const Tensor& batch, const ModelConfig& cfg);
Tensor frames_to_tensor(std::span<const TactileFrame> frames);
Activations frames_to_activations(std::span<const TactileFrame> frames, const ModelConfig& cfg);

/// Eval mode: batch-norm uses running statistics; parameters untouched.
Logits forward(const ModelParams& p, const Tensor& batch);
Logits forward_activations(const ModelParams& p, const Activations& input, int batch);

/// Train mode when mode == Train: batch statistics are used and folded into
/// the running statistics (momentum 0.1, unbiased variance).
Logits forward(ModelParams& p, const Tensor& batch, Mode mode, ForwardCache* cache = nullptr);
Logits forward_train(ModelParams& p, const Activations& input, int batch, ForwardCache& cache,
                     bool update_running = true);

struct Labels {
  std::vector<int> angle;
  std::vector<int> position;
};

/// Mean softmax cross-entropy per head, summed over the two heads.
double loss(const Activations& angle_logits, const Activations& pos_logits, const Labels& labels);

/// Column-wise softmax.
Activations softmax(const Activations& logits);

/// Exact gradients of loss() w.r.t. every trainable parameter, given the
/// cache of a train-mode forward on the same batch. Running-stat entries of
/// the result are zero.
ModelParams backward(const ModelParams& p, const ForwardCache& cache, const Labels& labels);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double base_lr = 0.01;
  double momentum = 0.9;
  int plateau_patience = 5;
  double plateau_factor = 0.1;
  double min_lr = 1e-5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for epochs < 1, batch_size < 1,
  /// plateau_factor outside (0, 1) and other non-positive settings.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_angle_accuracy = 0.0;
  double val_pos_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  void write_csv(std::ostream& out) const;
};

/// Reduces the learning rate by `factor` once the monitored loss has not
/// improved (relative threshold 1e-4) for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double min_lr);
  /// Records one epoch's validation loss; returns the learning rate to use next.
  double step(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double min_lr_;
  double best_;
  int bad_epochs_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Labels labels_of(std::span<const GripSample> samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch SGD with momentum and plateau learning-rate reduction.
/// Deterministic for a given (init, data, cfg). Throws TrainingError on a
/// non-finite loss.
std::pair<ModelParams, TrainHistory> train(ModelParams init, const Dataset& train_set,
                                           const Dataset& val_set, const TrainConfig& cfg,
                                           const EpochCallback& on_epoch = {});

struct Prediction {
  int angle = 0;
  int position = 0;
};

std::vector<Prediction> predict(const ModelParams& p, std::span<const TactileFrame> frames);
Prediction predict(const ModelParams& p, const TactileFrame& frame);

struct Evaluation {
  double angle_accuracy = 0.0;
  double pos_accuracy = 0.0;
  double loss = 0.0;
  ConfusionMatrix angle_confusion{4};
  ConfusionMatrix pos_confusion{3};
};

Evaluation evaluate(const ModelParams& p, const Dataset& test);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Format: "palmpipe-ckpt v1", "tensors N", one "name rank d0 d1 ..." line
// per tensor, "data", then little-endian float64 values in manifest order.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const ModelParams& p);
ModelParams load_checkpoint(const std::filesystem::path& path);
ModelParams read_checkpoint(std::istream& in);
/// Also rejects shapes differing from `expected`, naming the layer.
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace palmpipe::cnn
