#include "palmpipe/cnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "palmpipe/text_util.hpp"

namespace palmpipe::cnn {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto matrix = [&](const std::string& name, auto& m, std::vector<std::size_t> shape) {
    fn(name, shape, std::span<double>(const_cast<double*>(m.data()), static_cast<std::size_t>(m.size())), true);
  };
  auto vec = [&](const std::string& name, auto& v, bool trainable) {
    fn(name, std::vector<std::size_t>{static_cast<std::size_t>(v.size())},
       std::span<double>(const_cast<double*>(v.data()), static_cast<std::size_t>(v.size())), trainable);
  };
  const auto& cfg = p.config;
  auto conv = [&](const std::string& name, auto& c, int in, int out) {
    matrix(name + ".weight", c.weight,
           {static_cast<std::size_t>(out), static_cast<std::size_t>(in), 3, 3});
    vec(name + ".bias", c.bias, true);
  };
  auto bn = [&](const std::string& name, auto& b) {
    vec(name + ".weight", b.gamma, true);
    vec(name + ".bias", b.beta, true);
    vec(name + ".running_mean", b.running_mean, false);
    vec(name + ".running_var", b.running_var, false);
  };
  auto head = [&](const std::string& name, auto& h) {
    for (int i = 0; i < 4; ++i) {
      const std::string layer = name + "." + std::to_string(i);
      matrix(layer + ".weight", h[i].weight,
             {static_cast<std::size_t>(h[i].weight.rows()), static_cast<std::size_t>(h[i].weight.cols())});
      vec(layer + ".bias", h[i].bias, true);
    }
  };
  conv("conv1", p.conv1, cfg.in_channels, cfg.conv1_channels);
  bn("bn1", p.bn1);
  conv("conv2", p.conv2, cfg.conv1_channels, cfg.conv2_channels);
  bn("bn2", p.bn2);
  head("angle_head", p.angle_head);
  head("pos_head", p.pos_head);
}

std::vector<std::span<double>> trainable_spans(ModelParams& p) {
  std::vector<std::span<double>> out;
  for_each_param(p, [&](const ParamView& v) {
    if (v.trainable) out.push_back(v.data);
  });
  return out;
}

std::array<int, 5> head_dims(const ModelConfig& cfg, int classes) {
  return {cfg.flat_features(), cfg.head_hidden[0], cfg.head_hidden[1], cfg.head_hidden[2], classes};
}

void im2col(const Activations& in, int channels, int grid, int batch, Activations& col) {
  const int pixels = grid * grid;
  col.setZero(channels * 9, static_cast<Eigen::Index>(batch) * pixels);
  for (int n = 0; n < batch; ++n) {
    for (int y = 0; y < grid; ++y) {
      for (int x = 0; x < grid; ++x) {
        double* dst = col.col(static_cast<Eigen::Index>(n) * pixels + y * grid + x).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= grid) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= grid) continue;
            const double* src = in.col(static_cast<Eigen::Index>(n) * pixels + sy * grid + sx).data();
            for (int c = 0; c < channels; ++c) dst[c * 9 + ky * 3 + kx] = src[c];
          }
        }
      }
    }
  }
}

void col2im(const Activations& col, int channels, int grid, int batch, Activations& out) {
  const int pixels = grid * grid;
  out.setZero(channels, static_cast<Eigen::Index>(batch) * pixels);
  for (int n = 0; n < batch; ++n) {
    for (int y = 0; y < grid; ++y) {
      for (int x = 0; x < grid; ++x) {
        const double* src = col.col(static_cast<Eigen::Index>(n) * pixels + y * grid + x).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= grid) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= grid) continue;
            double* dst = out.col(static_cast<Eigen::Index>(n) * pixels + sy * grid + sx).data();
            for (int c = 0; c < channels; ++c) dst[c] += src[c * 9 + ky * 3 + kx];
          }
        }
      }
    }
  }
}

Activations conv_forward(const Conv& conv, const Activations& col) {
  Activations z = conv.weight * col;
  z.colwise() += conv.bias;
  return z;
}

Activations bn_eval(const BatchNorm& bn, const Activations& z) {
  const Vector scale = bn.gamma.array() / (bn.running_var.array() + kBnEps).sqrt();
  const Vector shift = bn.beta.array() - bn.running_mean.array() * scale.array();
  Activations y = scale.asDiagonal() * z;
  y.colwise() += shift;
  return y;
}

void bn_train(BatchNorm& bn, const Activations& z, Activations& xhat, Vector& invstd,
              Activations& y, bool update_running) {
  const double m = static_cast<double>(z.cols());
  const Vector mean = z.rowwise().mean();
  xhat = z.colwise() - mean;
  const Vector var = xhat.array().square().rowwise().sum() / m;
  invstd = (var.array() + kBnEps).rsqrt();
  xhat = invstd.asDiagonal() * xhat;
  y = bn.gamma.asDiagonal() * xhat;
  y.colwise() += bn.beta;
  if (update_running) {
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    bn.running_mean = (1.0 - kBnMomentum) * bn.running_mean + kBnMomentum * mean;
    bn.running_var = (1.0 - kBnMomentum) * bn.running_var + kBnMomentum * unbias * var;
  }
}

Activations relu(const Activations& x) { return x.cwiseMax(0.0); }

Activations flatten(const Activations& a, int channels, int pixels, int batch) {
  Activations flat(static_cast<Eigen::Index>(channels) * pixels, batch);
  for (int n = 0; n < batch; ++n) {
    double* dst = flat.col(n).data();
    for (int p = 0; p < pixels; ++p) {
      const double* src = a.col(static_cast<Eigen::Index>(n) * pixels + p).data();
      for (int c = 0; c < channels; ++c) dst[c * pixels + p] = src[c];
    }
  }
  return flat;
}

Activations unflatten(const Activations& flat, int channels, int pixels, int batch) {
  Activations a(channels, static_cast<Eigen::Index>(batch) * pixels);
  for (int n = 0; n < batch; ++n) {
    const double* src = flat.col(n).data();
    for (int p = 0; p < pixels; ++p) {
      double* dst = a.col(static_cast<Eigen::Index>(n) * pixels + p).data();
      for (int c = 0; c < channels; ++c) dst[c] = src[c * pixels + p];
    }
  }
  return a;
}

Activations affine(const Affine& layer, const Activations& x) {
  Activations y = layer.weight * x;
  y.colwise() += layer.bias;
  return y;
}

Activations head_forward(const std::array<Affine, 4>& head, Activations x,
                         std::array<Activations, 4>* inputs, std::array<Activations, 3>* pre) {
  for (int i = 0; i < 4; ++i) {
    if (inputs) (*inputs)[i] = x;
    Activations z = affine(head[i], x);
    if (i == 3) return z;
    if (pre) (*pre)[i] = z;
    x = relu(z);
  }
  return x;
}

// Returns the gradient w.r.t. the head's input.
Activations head_backward(const std::array<Affine, 4>& head, const std::array<Activations, 4>& inputs,
                          const std::array<Activations, 3>& pre, Activations dz,
                          std::array<Affine, 4>& grad) {
  for (int i = 3; i >= 0; --i) {
    grad[i].weight = dz * inputs[i].transpose();
    grad[i].bias = dz.rowwise().sum();
    Activations dx = head[i].weight.transpose() * dz;
    if (i == 0) return dx;
    dz = dx.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
  }
  return {};
}

Activations bn_backward(const BatchNorm& bn, const Activations& xhat, const Vector& invstd,
                        const Activations& dy, BatchNorm& grad) {
  const double m = static_cast<double>(dy.cols());
  grad.beta = dy.rowwise().sum();
  grad.gamma = dy.cwiseProduct(xhat).rowwise().sum();
  Activations dz = m * dy;
  dz.colwise() -= grad.beta;
  dz -= grad.gamma.asDiagonal() * xhat;
  const Vector scale = bn.gamma.array() * invstd.array() / m;
  return scale.asDiagonal() * dz;
}

void check_labels(const Labels& labels, Eigen::Index n, int angle_classes, int pos_classes) {
  if (static_cast<Eigen::Index>(labels.angle.size()) != n ||
      static_cast<Eigen::Index>(labels.position.size()) != n) {
    throw std::invalid_argument("label count does not match batch size");
  }
  for (int a : labels.angle) {
    if (a < 0 || a >= angle_classes) throw std::out_of_range("angle label out of range");
  }
  for (int p : labels.position) {
    if (p < 0 || p >= pos_classes) throw std::out_of_range("position label out of range");
  }
}

double head_loss(const Activations& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    const auto col = logits.col(n);
    const double mx = col.maxCoeff();
    const double lse = mx + std::log((col.array() - mx).exp().sum());
    total += lse - col(labels[n]);
  }
  return total / static_cast<double>(logits.cols());
}

Activations ce_grad(const Activations& logits, const std::vector<int>& labels) {
  Activations g = softmax(logits);
  for (Eigen::Index n = 0; n < g.cols(); ++n) g(labels[n], n) -= 1.0;
  return g / static_cast<double>(g.cols());
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

void write_le(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.write(bytes, 8);
    }
  }
}

bool read_le(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) return false;
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) { data.assign(numel(), 0.0); }

std::size_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ModelParams zeros_like(const ModelConfig& cfg) {
  ModelParams p;
  p.config = cfg;
  auto conv = [](Conv& c, int in, int out) {
    c.weight = Matrix::Zero(out, in * 9);
    c.bias = Vector::Zero(out);
  };
  auto bn = [](BatchNorm& b, int ch) {
    b.gamma = Vector::Zero(ch);
    b.beta = Vector::Zero(ch);
    b.running_mean = Vector::Zero(ch);
    b.running_var = Vector::Ones(ch);
  };
  auto head = [&](std::array<Affine, 4>& h, int classes) {
    const auto dims = head_dims(cfg, classes);
    for (int i = 0; i < 4; ++i) {
      h[i].weight = Matrix::Zero(dims[i + 1], dims[i]);
      h[i].bias = Vector::Zero(dims[i + 1]);
    }
  };
  conv(p.conv1, cfg.in_channels, cfg.conv1_channels);
  bn(p.bn1, cfg.conv1_channels);
  conv(p.conv2, cfg.conv1_channels, cfg.conv2_channels);
  bn(p.bn2, cfg.conv2_channels);
  head(p.angle_head, cfg.angle_classes);
  head(p.pos_head, cfg.position_classes);
  return p;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros_like(cfg);
  Rng rng = make_stream(seed, 0xc0ffee);
  auto fill = [&](auto& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  auto layer = [&](auto& weight, auto& bias) {
    const double fan_in = static_cast<double>(weight.cols());
    fill(weight, std::sqrt(6.0 / fan_in));
    fill(bias, 1.0 / std::sqrt(fan_in));
  };
  layer(p.conv1.weight, p.conv1.bias);
  layer(p.conv2.weight, p.conv2.bias);
  for (auto* h : {&p.angle_head, &p.pos_head}) {
    for (auto& a : *h) layer(a.weight, a.bias);
  }
  p.bn1.gamma.setOnes();
  p.bn2.gamma.setOnes();
  return p;
}

void for_each_param(ModelParams& p, const std::function<void(const ParamView&)>& fn) {
  visit_params(p, [&](const std::string& name, const std::vector<std::size_t>& shape,
                      std::span<double> data, bool trainable) {
    fn(ParamView{name, shape, data, trainable});
  });
}

void for_each_param(const ModelParams& p, const std::function<void(const ParamView&)>& fn) {
  visit_params(p, [&](const std::string& name, const std::vector<std::size_t>& shape,
                      std::span<double> data, bool trainable) {
    fn(ParamView{name, shape, data, trainable});
  });
}

Activations to_activations(const Tensor& batch, const ModelConfig& cfg) {
  if (batch.shape.size() != 4 || batch.shape[0] < 1 ||
      batch.shape[1] != static_cast<std::size_t>(cfg.in_channels) ||
      batch.shape[2] != static_cast<std::size_t>(cfg.grid) ||
      batch.shape[3] != static_cast<std::size_t>(cfg.grid)) {
    throw std::invalid_argument("input batch must have shape [N, " + std::to_string(cfg.in_channels) +
                                ", " + std::to_string(cfg.grid) + ", " + std::to_string(cfg.grid) +
                                "], got " + shape_string(batch.shape));
  }
  if (batch.data.size() != batch.numel()) throw std::invalid_argument("tensor data size mismatch");
  const int n = static_cast<int>(batch.shape[0]);
  const int pixels = cfg.pixels();
  Activations a(cfg.in_channels, static_cast<Eigen::Index>(n) * pixels);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < cfg.in_channels; ++c) {
      for (int p = 0; p < pixels; ++p) {
        a(c, static_cast<Eigen::Index>(s) * pixels + p) =
            batch.data[(static_cast<std::size_t>(s) * cfg.in_channels + c) * pixels + p];
      }
    }
  }
  return a;
}

Tensor frames_to_tensor(std::span<const TactileFrame> frames) {
  Tensor t({frames.size(), 2, 10, 10});
  for (std::size_t s = 0; s < frames.size(); ++s) {
    for (std::size_t i = 0; i < 100; ++i) {
      t.data[s * 200 + i] = frames[s].finger_a.values()[i] / kMaxForceN;
      t.data[s * 200 + 100 + i] = frames[s].finger_b.values()[i] / kMaxForceN;
    }
  }
  return t;
}

Activations frames_to_activations(std::span<const TactileFrame> frames, const ModelConfig& cfg) {
  if (cfg.in_channels != 2 || cfg.grid != 10) {
    throw std::invalid_argument("tactile frames need a 2-channel 10x10 model");
  }
  Activations a(2, static_cast<Eigen::Index>(frames.size()) * 100);
  for (std::size_t s = 0; s < frames.size(); ++s) {
    const auto fa = frames[s].finger_a.values();
    const auto fb = frames[s].finger_b.values();
    for (std::size_t p = 0; p < 100; ++p) {
      const auto col = static_cast<Eigen::Index>(s * 100 + p);
      a(0, col) = fa[p] / kMaxForceN;
      a(1, col) = fb[p] / kMaxForceN;
    }
  }
  return a;
}

Logits forward_activations(const ModelParams& p, const Activations& input, int batch) {
  const auto& cfg = p.config;
  Activations col;
  im2col(input, cfg.in_channels, cfg.grid, batch, col);
  Activations a1 = relu(bn_eval(p.bn1, conv_forward(p.conv1, col)));
  im2col(a1, cfg.conv1_channels, cfg.grid, batch, col);
  Activations a2 = relu(bn_eval(p.bn2, conv_forward(p.conv2, col)));
  const Activations flat = flatten(a2, cfg.conv2_channels, cfg.pixels(), batch);
  return {head_forward(p.angle_head, flat, nullptr, nullptr),
          head_forward(p.pos_head, flat, nullptr, nullptr)};
}

Logits forward(const ModelParams& p, const Tensor& batch) {
  return forward_activations(p, to_activations(batch, p.config), static_cast<int>(batch.shape[0]));
}

Logits forward_train(ModelParams& p, const Activations& input, int batch, ForwardCache& c,
                     bool update_running) {
  const auto& cfg = p.config;
  c.batch = batch;
  im2col(input, cfg.in_channels, cfg.grid, batch, c.col1);
  c.z1 = conv_forward(p.conv1, c.col1);
  bn_train(p.bn1, c.z1, c.xhat1, c.invstd1, c.y1, update_running);
  c.a1 = relu(c.y1);
  im2col(c.a1, cfg.conv1_channels, cfg.grid, batch, c.col2);
  c.z2 = conv_forward(p.conv2, c.col2);
  bn_train(p.bn2, c.z2, c.xhat2, c.invstd2, c.y2, update_running);
  c.a2 = relu(c.y2);
  c.flat = flatten(c.a2, cfg.conv2_channels, cfg.pixels(), batch);
  c.logits.angle = head_forward(p.angle_head, c.flat, &c.angle_in, &c.angle_pre);
  c.logits.position = head_forward(p.pos_head, c.flat, &c.pos_in, &c.pos_pre);
  return c.logits;
}

Logits forward(ModelParams& p, const Tensor& batch, Mode mode, ForwardCache* cache) {
  if (mode == Mode::Eval) return forward(static_cast<const ModelParams&>(p), batch);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  return forward_train(p, to_activations(batch, p.config), static_cast<int>(batch.shape[0]), c);
}

Activations softmax(const Activations& logits) {
  Activations out(logits.rows(), logits.cols());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    const auto col = logits.col(n);
    const Eigen::VectorXd e = (col.array() - col.maxCoeff()).exp();
    out.col(n) = e / e.sum();
  }
  return out;
}

double loss(const Activations& angle_logits, const Activations& pos_logits, const Labels& labels) {
  if (angle_logits.cols() != pos_logits.cols() || angle_logits.cols() == 0) {
    throw std::invalid_argument("logit batches must be non-empty and equally sized");
  }
  check_labels(labels, angle_logits.cols(), static_cast<int>(angle_logits.rows()),
               static_cast<int>(pos_logits.rows()));
  return head_loss(angle_logits, labels.angle) + head_loss(pos_logits, labels.position);
}

ModelParams backward(const ModelParams& p, const ForwardCache& c, const Labels& labels) {
  const auto& cfg = p.config;
  check_labels(labels, c.logits.angle.cols(), cfg.angle_classes, cfg.position_classes);
  ModelParams g = zeros_like(cfg);
  g.bn1.running_var.setZero();
  g.bn2.running_var.setZero();

  Activations dflat = head_backward(p.angle_head, c.angle_in, c.angle_pre,
                                    ce_grad(c.logits.angle, labels.angle), g.angle_head);
  dflat += head_backward(p.pos_head, c.pos_in, c.pos_pre, ce_grad(c.logits.position, labels.position),
                         g.pos_head);

  Activations da2 = unflatten(dflat, cfg.conv2_channels, cfg.pixels(), c.batch);
  Activations dy2 = da2.cwiseProduct((c.y2.array() > 0.0).cast<double>().matrix());
  Activations dz2 = bn_backward(p.bn2, c.xhat2, c.invstd2, dy2, g.bn2);
  g.conv2.weight = dz2 * c.col2.transpose();
  g.conv2.bias = dz2.rowwise().sum();
  const Activations dcol2 = p.conv2.weight.transpose() * dz2;
  Activations da1;
  col2im(dcol2, cfg.conv1_channels, cfg.grid, c.batch, da1);

  Activations dy1 = da1.cwiseProduct((c.y1.array() > 0.0).cast<double>().matrix());
  Activations dz1 = bn_backward(p.bn1, c.xhat1, c.invstd1, dy1, g.bn1);
  g.conv1.weight = dz1 * c.col1.transpose();
  g.conv1.bias = dz1.rowwise().sum();
  return g;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (plateau_patience < 0) throw std::invalid_argument("plateau_patience must be non-negative");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw std::invalid_argument("plateau_factor must be in (0, 1)");
  }
  if (!(min_lr >= 0.0)) throw std::invalid_argument("min_lr must be non-negative");
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,val_loss,val_angle_accuracy,val_pos_accuracy,lr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
        << format_double(e.val_angle_accuracy) << ',' << format_double(e.val_pos_accuracy) << ','
        << format_double(e.lr) << '\n';
  }
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor, double min_lr)
    : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr), best_(INFINITY) {}

double PlateauScheduler::step(double val_loss) {
  if (val_loss < best_ * (1.0 - 1e-4)) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

Labels labels_of(std::span<const GripSample> samples) {
  Labels l;
  l.angle.reserve(samples.size());
  l.position.reserve(samples.size());
  for (const auto& s : samples) {
    l.angle.push_back(static_cast<int>(s.angle));
    l.position.push_back(static_cast<int>(s.position));
  }
  return l;
}

std::pair<ModelParams, TrainHistory> train(ModelParams params, const Dataset& train_set,
                                           const Dataset& val_set, const TrainConfig& cfg,
                                           const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("training and validation sets must be non-empty");

  std::vector<TactileFrame> frames;
  frames.reserve(train_set.size());
  for (const auto& s : train_set.samples) frames.push_back(s.frame);
  const Activations inputs = frames_to_activations(frames, params.config);
  const Labels all_labels = labels_of(train_set.samples);
  const int pixels = params.config.pixels();
  const int in_ch = params.config.in_channels;

  ModelParams velocity = zeros_like(params.config);
  auto param_spans = trainable_spans(params);
  auto vel_spans = trainable_spans(velocity);

  PlateauScheduler scheduler(cfg.base_lr, cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);
  double lr = cfg.base_lr;
  TrainHistory history;
  std::vector<std::size_t> order(train_set.size());
  ForwardCache cache;
  Activations batch_in;
  Labels batch_labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(cfg.seed, 0x7a11'0000ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int n = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      batch_in.resize(in_ch, static_cast<Eigen::Index>(n) * pixels);
      batch_labels.angle.resize(n);
      batch_labels.position.resize(n);
      for (int i = 0; i < n; ++i) {
        const auto idx = order[start + i];
        batch_in.middleCols(static_cast<Eigen::Index>(i) * pixels, pixels) =
            inputs.middleCols(static_cast<Eigen::Index>(idx) * pixels, pixels);
        batch_labels.angle[i] = all_labels.angle[idx];
        batch_labels.position[i] = all_labels.position[idx];
      }
      const Logits logits = forward_train(params, batch_in, n, cache);
      const double l = loss(logits.angle, logits.position, batch_labels);
      if (!std::isfinite(l)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(start / cfg.batch_size) + " (lr " + format_double(lr) + ")");
      }
      loss_sum += l * n;

      ModelParams grad = backward(params, cache, batch_labels);
      auto grad_spans = trainable_spans(grad);
      for (std::size_t t = 0; t < param_spans.size(); ++t) {
        auto& w = param_spans[t];
        auto& v = vel_spans[t];
        const auto& g = grad_spans[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
      }
    }

    const Evaluation val = evaluate(params, val_set);
    if (!std::isfinite(val.loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = val.loss;
    rec.val_angle_accuracy = val.angle_accuracy;
    rec.val_pos_accuracy = val.pos_accuracy;
    rec.lr = lr;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    lr = scheduler.step(val.loss);
  }
  return {std::move(params), std::move(history)};
}

std::vector<Prediction> predict(const ModelParams& p, std::span<const TactileFrame> frames) {
  std::vector<Prediction> out;
  out.reserve(frames.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const auto chunk = frames.subspan(start, std::min(kChunk, frames.size() - start));
    const Logits l = forward_activations(p, frames_to_activations(chunk, p.config),
                                         static_cast<int>(chunk.size()));
    for (Eigen::Index n = 0; n < l.angle.cols(); ++n) {
      out.push_back({argmax(l.angle.col(n)), argmax(l.position.col(n))});
    }
  }
  return out;
}

Prediction predict(const ModelParams& p, const TactileFrame& frame) {
  return predict(p, std::span<const TactileFrame>(&frame, 1)).front();
}

Evaluation evaluate(const ModelParams& p, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluation set must be non-empty");
  Evaluation ev{0.0, 0.0, 0.0, ConfusionMatrix(p.config.angle_classes),
                ConfusionMatrix(p.config.position_classes)};
  constexpr std::size_t kChunk = 512;
  double loss_sum = 0.0;
  std::vector<TactileFrame> frames;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const auto chunk = std::span<const GripSample>(test.samples).subspan(
        start, std::min(kChunk, test.size() - start));
    frames.clear();
    for (const auto& s : chunk) frames.push_back(s.frame);
    const Logits l = forward_activations(p, frames_to_activations(frames, p.config),
                                         static_cast<int>(chunk.size()));
    const Labels labels = labels_of(chunk);
    loss_sum += loss(l.angle, l.position, labels) * static_cast<double>(chunk.size());
    for (Eigen::Index n = 0; n < l.angle.cols(); ++n) {
      ev.angle_confusion.add(labels.angle[n], argmax(l.angle.col(n)));
      ev.pos_confusion.add(labels.position[n], argmax(l.position.col(n)));
    }
  }
  ev.loss = loss_sum / static_cast<double>(test.size());
  ev.angle_accuracy = ev.angle_confusion.accuracy();
  ev.pos_accuracy = ev.pos_confusion.accuracy();
  return ev;
}

void write_checkpoint(std::ostream& out, const ModelParams& p) {
  std::vector<ParamView> views;
  for_each_param(p, [&](const ParamView& v) { views.push_back(v); });
  out << "palmpipe-ckpt v1\n";
  out << "tensors " << views.size() << '\n';
  for (const auto& v : views) {
    out << v.name << ' ' << v.shape.size();
    for (auto d : v.shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  for (const auto& v : views) write_le(out, v.data);
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, p);
  out.flush();
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelParams read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "palmpipe-ckpt v1") {
    throw CheckpointError("not a palmpipe checkpoint (bad magic)");
  }
  if (!std::getline(in, line) || !line.starts_with("tensors ")) {
    throw CheckpointError("checkpoint manifest missing tensor count");
  }
  const auto count = parse_int(std::string_view(line).substr(8));
  if (!count || *count <= 0 || *count > 1000) throw CheckpointError("bad tensor count in manifest");

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
  };
  std::vector<Entry> manifest;
  for (long long i = 0; i < *count; ++i) {
    if (!std::getline(in, line)) throw CheckpointError("checkpoint manifest truncated");
    std::istringstream ss(line);
    Entry e;
    std::size_t rank = 0;
    if (!(ss >> e.name >> rank) || rank == 0 || rank > 4) {
      throw CheckpointError("malformed manifest line: " + line);
    }
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(ss >> d) || d == 0 || d > (1u << 24)) throw CheckpointError("malformed dims for " + e.name);
    }
    manifest.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "data") throw CheckpointError("checkpoint manifest not terminated");

  auto find = [&](const std::string& name) -> const Entry& {
    for (const auto& e : manifest) {
      if (e.name == name) return e;
    }
    throw CheckpointError("checkpoint is missing layer " + name);
  };
  // Recover the architecture from the manifest.
  ModelConfig cfg;
  const auto& c1 = find("conv1.weight").shape;
  const auto& c2 = find("conv2.weight").shape;
  const auto& h0 = find("angle_head.0.weight").shape;
  if (c1.size() != 4 || c2.size() != 4 || h0.size() != 2) {
    throw CheckpointError("unexpected rank in conv1/conv2/angle_head.0 weights");
  }
  cfg.conv1_channels = static_cast<int>(c1[0]);
  cfg.in_channels = static_cast<int>(c1[1]);
  cfg.conv2_channels = static_cast<int>(c2[0]);
  const auto pixels = h0[1] / c2[0];
  cfg.grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixels))));
  for (int i = 0; i < 3; ++i) {
    const auto& w = find("angle_head." + std::to_string(i) + ".weight").shape;
    if (w.size() != 2) throw CheckpointError("unexpected rank in angle_head weights");
    cfg.head_hidden[i] = static_cast<int>(w[0]);
  }
  cfg.angle_classes = static_cast<int>(find("angle_head.3.weight").shape.at(0));
  cfg.position_classes = static_cast<int>(find("pos_head.3.weight").shape.at(0));

  ModelParams p = zeros_like(cfg);
  std::size_t index = 0;
  for_each_param(p, [&](const ParamView& v) {
    if (index >= manifest.size()) throw CheckpointError("checkpoint is missing layer " + v.name);
    const auto& e = manifest[index++];
    if (e.name != v.name) {
      throw CheckpointError("unexpected layer " + e.name + " where " + v.name + " was expected");
    }
    if (e.shape != v.shape) {
      throw CheckpointError("shape mismatch in layer " + v.name + ": expected " + shape_string(v.shape) +
                            ", got " + shape_string(e.shape));
    }
  });
  if (index != manifest.size()) throw CheckpointError("unexpected extra layer " + manifest[index].name);

  for_each_param(p, [&](const ParamView& v) {
    if (!read_le(in, v.data)) throw CheckpointError("checkpoint data truncated in layer " + v.name);
    for (double x : v.data) {
      if (!std::isfinite(x)) throw CheckpointError("non-finite value in layer " + v.name);
    }
  });
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint data");
  for (const auto* bn : {&p.bn1, &p.bn2}) {
    if ((bn->running_var.array() <= 0.0).any()) {
      throw CheckpointError("batch-norm running variance must be positive");
    }
  }
  return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  ModelParams p = load_checkpoint(path);
  const ModelParams ref = zeros_like(expected);
  std::vector<ParamView> want;
  for_each_param(ref, [&](const ParamView& v) { want.push_back(v); });
  std::size_t i = 0;
  for_each_param(p, [&](const ParamView& v) {
    if (v.shape != want[i].shape) {
      throw CheckpointError("shape mismatch in layer " + v.name + ": expected " +
                            shape_string(want[i].shape) + ", got " + shape_string(v.shape));
    }
    ++i;
  });
  return p;
}

}  // namespace palmpipe::cnn
