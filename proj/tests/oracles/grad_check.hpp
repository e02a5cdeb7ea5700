#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "palmpipe/cnn.hpp"

namespace oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]"
  std::size_t checked = 0;
};

/// Central differences on every trainable scalar against backward().
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradient_check(palmpipe::cnn::ModelParams p, const palmpipe::cnn::Activations& input,
                                      int batch, const palmpipe::cnn::Labels& labels, double h = 1e-5,
                                      double floor = 1e-6) {
  using namespace palmpipe::cnn;
  auto loss_at = [&](ModelParams& q) {
    ForwardCache c;
    const Logits l = forward_train(q, input, batch, c, false);
    return loss(l.angle, l.position, labels);
  };
  ForwardCache cache;
  forward_train(p, input, batch, cache, false);
  const ModelParams grad = backward(p, cache, labels);

  std::vector<std::span<const double>> analytic;
  for_each_param(grad, [&](const ParamView& v) {
    if (v.trainable) analytic.push_back(v.data);
  });

  GradCheckResult r;
  std::size_t t = 0;
  for_each_param(p, [&](const ParamView& v) {
    if (!v.trainable) return;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
      const double orig = v.data[i];
      v.data[i] = orig + h;
      const double up = loss_at(p);
      v.data[i] = orig - h;
      const double down = loss_at(p);
      v.data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = v.name + "[" + std::to_string(i) + "]";
      }
      ++r.checked;
    }
    ++t;
  });
  return r;
}

/// Small model and batch used by the gradient tests.
inline palmpipe::cnn::ModelConfig small_config() {
  palmpipe::cnn::ModelConfig cfg;
  cfg.grid = 4;
  cfg.conv1_channels = 3;
  cfg.conv2_channels = 4;
  cfg.head_hidden = {6, 5, 4};
  return cfg;
}

}  // namespace oracle
