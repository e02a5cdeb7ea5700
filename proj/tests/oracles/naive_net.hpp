#pragma once

#include <cmath>
#include <vector>

#include "palmpipe/cnn.hpp"

// Loop-by-loop reference for the classifier: direct convolution with zero
// padding, per-channel batch norm, dense layers. Input is [n][c][g][g] flat.
namespace oracle {

struct NaiveLogits {
  std::vector<std::vector<double>> angle;     // [n][classes]
  std::vector<std::vector<double>> position;  // [n][classes]
};

namespace detail {

using Feature = std::vector<double>;  // [n][c][g][g] flat

inline Feature conv3x3(const palmpipe::cnn::Conv& conv, const Feature& in, int n, int cin, int g) {
  const int cout = static_cast<int>(conv.weight.rows());
  Feature out(static_cast<std::size_t>(n) * cout * g * g, 0.0);
  for (int s = 0; s < n; ++s)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < g; ++y)
        for (int x = 0; x < g; ++x) {
          double acc = conv.bias(co);
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = y + ky - 1, xx = x + kx - 1;
                if (yy < 0 || yy >= g || xx < 0 || xx >= g) continue;
                acc += conv.weight(co, ci * 9 + ky * 3 + kx) * in[((s * cin + ci) * g + yy) * g + xx];
              }
          out[((s * cout + co) * g + y) * g + x] = acc;
        }
  return out;
}

inline void batch_norm_relu(const palmpipe::cnn::BatchNorm& bn, Feature& z, int n, int c, int g,
                            bool batch_stats) {
  const int pix = g * g;
  for (int ch = 0; ch < c; ++ch) {
    double mean = bn.running_mean(ch), var = bn.running_var(ch);
    if (batch_stats) {
      double sum = 0.0;
      for (int s = 0; s < n; ++s)
        for (int p = 0; p < pix; ++p) sum += z[(s * c + ch) * pix + p];
      mean = sum / (n * pix);
      double sq = 0.0;
      for (int s = 0; s < n; ++s)
        for (int p = 0; p < pix; ++p) sq += std::pow(z[(s * c + ch) * pix + p] - mean, 2);
      var = sq / (n * pix);
    }
    for (int s = 0; s < n; ++s)
      for (int p = 0; p < pix; ++p) {
        double& v = z[(s * c + ch) * pix + p];
        v = bn.gamma(ch) * (v - mean) / std::sqrt(var + 1e-5) + bn.beta(ch);
        v = v > 0.0 ? v : 0.0;
      }
  }
}

inline std::vector<double> head(const std::array<palmpipe::cnn::Affine, 4>& layers, std::vector<double> x) {
  for (int l = 0; l < 4; ++l) {
    const auto& a = layers[l];
    std::vector<double> y(a.weight.rows());
    for (Eigen::Index o = 0; o < a.weight.rows(); ++o) {
      double acc = a.bias(o);
      for (Eigen::Index i = 0; i < a.weight.cols(); ++i) acc += a.weight(o, i) * x[i];
      y[o] = (l < 3 && acc < 0.0) ? 0.0 : acc;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace detail

inline NaiveLogits naive_forward(const palmpipe::cnn::ModelParams& p, const std::vector<double>& input, int n,
                                 bool batch_stats) {
  const auto& cfg = p.config;
  const int g = cfg.grid;
  auto z1 = detail::conv3x3(p.conv1, input, n, cfg.in_channels, g);
  detail::batch_norm_relu(p.bn1, z1, n, cfg.conv1_channels, g, batch_stats);
  auto z2 = detail::conv3x3(p.conv2, z1, n, cfg.conv1_channels, g);
  detail::batch_norm_relu(p.bn2, z2, n, cfg.conv2_channels, g, batch_stats);
  NaiveLogits out;
  const std::size_t per = static_cast<std::size_t>(cfg.conv2_channels) * g * g;
  for (int s = 0; s < n; ++s) {
    std::vector<double> flat(z2.begin() + s * per, z2.begin() + (s + 1) * per);
    out.angle.push_back(detail::head(p.angle_head, flat));
    out.position.push_back(detail::head(p.pos_head, flat));
  }
  return out;
}

/// Mean cross-entropy straight from the definition, in long double.
inline double naive_cross_entropy(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    long double z = 0.0L;
    for (double v : logits[s]) z += std::exp(static_cast<long double>(v));
    total -= std::log(std::exp(static_cast<long double>(logits[s][labels[s]])) / z);
  }
  return static_cast<double>(total / logits.size());
}

}  // namespace oracle
