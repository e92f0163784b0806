#pragma once

// Reverse-mode gradients of the model and loss, written out by hand, plus a
// central finite-difference checker that verifies them coordinate by coordinate.

#include "scgt/core.hpp"
#include "scgt/fc_graph.hpp"
#include "scgt/losses.hpp"
#include "scgt/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace scgt {

/// One (graph, target) pair. For classification the target is the class index 0 or 1.
struct BatchItem {
  const BrainGraph* graph = nullptr;
  double target = 0.0;
  std::string_view id{};
};

struct LossConfig {
  double smooth_l1_delta = 1.0;
};

inline int class_label(double target) {
  if (target != 0.0 && target != 1.0) {
    throw ValidationError("classification targets must be 0 or 1, got " + std::to_string(target));
  }
  return static_cast<int>(target);
}

/// Per-sample loss and its gradient with respect to the prediction vector.
inline LossGrad sample_loss(const Vec& prediction, double target, Task task, const LossConfig& lc) {
  if (task == Task::Regression) {
    LossGrad out;
    out.loss = smooth_l1(prediction(0), target, lc.smooth_l1_delta);
    out.dlogits = Vec::Constant(1, smooth_l1_grad(prediction(0), target, lc.smooth_l1_delta));
    return out;
  }
  return cross_entropy(prediction, class_label(target));
}

/// Accumulates d(loss)/d(params) into grads given d(loss)/d(prediction).
inline void backward(const Params& params, const ModelConfig& cfg, const BrainGraph& graph,
                     const ForwardTrace& trace, const Vec& dprediction, Params& grads) {
  grads.w_head.noalias() += dprediction * trace.graph_vector.transpose();
  grads.b_head += dprediction;
  const Vec dg = params.w_head.transpose() * dprediction;

  const Eigen::Index n = graph.n_nodes();
  Mat dy = Eigen::Map<const Mat>(dg.data(), n, cfg.layer_dims.back());
  const bool scgt = cfg.mode == Mode::Scgt;

  for (int l = cfg.n_layers() - 1; l >= 0; --l) {
    const LayerTrace& tr = trace.layers[l];
    const LayerParams& lp = params.layers[l];
    LayerParams& gl = grads.layers[l];
    const Eigen::Index d = tr.input.cols();
    const Eigen::Index dk = d / cfg.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    // O_h = ReLU(affine)
    const Mat du = dy.cwiseProduct((tr.pre_activation.array() > 0.0).cast<double>().matrix());
    gl.w_out.noalias() += du.transpose() * tr.residual;
    gl.b_out += du.colwise().sum().transpose();
    const Mat dres = du * lp.w_out;

    // Residual: both the input and the attended heads receive dres.
    Mat dx = dres;
    Mat dq = Mat::Zero(n, d), dkey = Mat::Zero(n, d), dv = Mat::Zero(n, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Eigen::Index c0 = h * dk;
      const Mat& a = tr.attention[h];
      const auto dout = dres.middleCols(c0, dk);
      dv.middleCols(c0, dk).noalias() += a.transpose() * dout;
      const Mat da = dout * tr.values.middleCols(c0, dk).transpose();
      // Softmax backward; entries outside the support have a == 0 and stay 0.
      const Vec row_dot = a.cwiseProduct(da).rowwise().sum();
      const Mat ds = a.cwiseProduct(da.colwise() - row_dot) * scale;
      dq.middleCols(c0, dk).noalias() += ds * tr.keys.middleCols(c0, dk);
      dkey.middleCols(c0, dk).noalias() += ds.transpose() * tr.queries.middleCols(c0, dk);
    }

    Mat dmembership;
    if (scgt) dmembership = Mat::Zero(n, cfg.k_r);
    const std::array<const Mat*, 3> dproj{&dkey, &dq, &dv};
    const std::array<const Mat*, 3> theta2{&lp.theta_k2, &lp.theta_q2, &lp.theta_v2};
    const std::array<const Vec*, 3> bias{&lp.b_k, &lp.b_q, &lp.b_v};
    const std::array<Mat*, 3> gtheta2{&gl.theta_k2, &gl.theta_q2, &gl.theta_v2};
    const std::array<Vec*, 3> gbias{&gl.b_k, &gl.b_q, &gl.b_v};
    for (std::size_t p = 0; p < 3; ++p) {
      const Mat& dp = *dproj[p];
      // P = X B0^T (+ sum_c diag(m_c) X B_c^T)
      const Mat b0 = reshape_square(*bias[p], d);
      const Mat gb0 = dp.transpose() * tr.input;
      *gbias[p] += flatten(gb0);
      dx.noalias() += dp * b0;
      if (!scgt) continue;
      for (Eigen::Index c = 0; c < cfg.k_r; ++c) {
        const Mat& img = tr.basis_images[p][static_cast<std::size_t>(c)];
        dmembership.col(c) += dp.cwiseProduct(img).rowwise().sum();
        const Mat scaled = tr.membership.col(c).asDiagonal() * dp;
        const Mat gbc = scaled.transpose() * tr.input;
        Mat& gt = *gtheta2[p];
        for (Eigen::Index r = 0; r < d; ++r)
          for (Eigen::Index s = 0; s < d; ++s) gt(r * d + s, c) += gbc(r, s);
        dx.noalias() += scaled * basis_matrix(*theta2[p], c, d);
      }
    }
    if (scgt) {
      const Mat dz = dmembership.cwiseProduct((tr.pre_membership.array() > 0.0).cast<double>().matrix());
      theta1_for(grads, cfg, l).noalias() += dz.transpose() * graph.pos_enc;
    }
    dy = std::move(dx);
  }
}

struct LossAndGrads {
  double loss = 0.0;
  Params grads;
};

/// Mean loss over the batch and its exact gradient. Per-sample gradients are
/// computed independently (optionally on several threads) and then summed in
/// batch order, so the result does not depend on the thread count.
inline LossAndGrads loss_and_gradients(std::span<const BatchItem> batch, const Params& params,
                                       const ModelConfig& cfg, const LossConfig& lc = {},
                                       unsigned threads = 1) {
  require(!batch.empty(), "batch must be non-empty");
  const std::size_t n = batch.size();
  std::vector<double> losses(n, 0.0);

  auto run_sample = [&](std::size_t i, Params& g) {
    const BatchItem& item = batch[i];
    const ForwardTrace tr = forward(*item.graph, params, cfg);
    const LossGrad lg = sample_loss(tr.prediction, item.target, cfg.task, lc);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("non-finite loss for sample '" + std::string(item.id) + "'");
    }
    losses[i] = lg.loss;
    backward(params, cfg, *item.graph, tr, lg.dlogits, g);
  };
  auto check = [&](const Params& g, std::size_t i) {
    bool ok = true;
    for_each_tensor(g, [&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
    if (!ok) throw NumericError("non-finite gradient for sample '" + std::string(batch[i].id) + "'");
  };

  LossAndGrads out;
  out.grads = zeros_like(params);
  const Params zero = out.grads;
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));

  if (workers == 1) {
    Params g = zero;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) for_each_tensor(g, [](const std::string&, auto& t) { t.setZero(); });
      run_sample(i, g);
      check(g, i);
      add_into(out.grads, g);
    }
  } else {
    std::vector<Params> per(n, zero);
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < n; i += workers) run_sample(i, per[i]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t i = 0; i < n; ++i) {
      check(per[i], i);
      add_into(out.grads, per[i]);
    }
  }
  double total = 0.0;
  for (double l : losses) total += l;
  const double inv = 1.0 / static_cast<double>(n);
  out.loss = total * inv;
  for_each_tensor(out.grads, [&](const std::string&, auto& t) { t *= inv; });
  return out;
}

/// Mean loss only (forward passes, no gradients).
inline double batch_loss(std::span<const BatchItem> batch, const Params& params,
                         const ModelConfig& cfg, const LossConfig& lc = {}) {
  require(!batch.empty(), "batch must be non-empty");
  double total = 0.0;
  for (const BatchItem& item : batch) {
    const ForwardTrace tr = forward(*item.graph, params, cfg);
    total += sample_loss(tr.prediction, item.target, cfg.task, lc).loss;
  }
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Below this gradient magnitude the error is measured relative to the floor,
  /// i.e. an absolute error of tolerance * floor is accepted near zero.
  double magnitude_floor = 1e-3;
  int batch_size = 3;
  double threshold = 0.2;
};

/// Relative error with the denominator floored at `floor`.
inline double gradient_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Small random graphs for gradient checks: FC from random Gaussian series.
inline std::vector<BrainGraph> random_graphs(int n_graphs, int n_nodes, double threshold,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<BrainGraph> graphs;
  for (int g = 0; g < n_graphs; ++g) {
    Mat series(3 * n_nodes + 4, n_nodes);
    for (Eigen::Index i = 0; i < series.size(); ++i) series.data()[i] = normal(rng);
    graphs.push_back(fc_to_graph(FCMatrix{pearson_correlation(series)}, threshold, n_nodes));
  }
  return graphs;
}

/// Compares every analytic gradient coordinate with a central difference.
inline GradCheckReport grad_check(const std::vector<BrainGraph>& graphs,
                                  const std::vector<double>& targets, Params params,
                                  const ModelConfig& cfg, double tolerance,
                                  const GradCheckOptions& opt = {}, const LossConfig& lc = {}) {
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < graphs.size(); ++i) batch.push_back({&graphs[i], targets[i], {}});
  const LossAndGrads analytic = loss_and_gradients(batch, params, cfg, lc);

  GradCheckReport report;
  report.tolerance = tolerance;
  report.pass = true;
  // params and grads visit the same tensors in the same order.
  std::vector<std::pair<double*, Eigen::Index>> ptensors;
  std::vector<const double*> gtensors;
  for_each_tensor(params, [&](const std::string& name, auto& t) {
    TensorCheck tc;
    tc.name = name;
    tc.size = static_cast<std::size_t>(t.size());
    report.tensors.push_back(tc);
    ptensors.emplace_back(t.data(), t.size());
  });
  for_each_tensor(analytic.grads, [&](const std::string&, const auto& t) { gtensors.push_back(t.data()); });
  for (std::size_t ti = 0; ti < ptensors.size(); ++ti) {
    auto [data, size] = ptensors[ti];
    TensorCheck& tc = report.tensors[ti];
    for (Eigen::Index k = 0; k < size; ++k) {
      const double orig = data[k];
      data[k] = orig + opt.step;
      const double up = batch_loss(batch, params, cfg, lc);
      data[k] = orig - opt.step;
      const double down = batch_loss(batch, params, cfg, lc);
      data[k] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = gtensors[ti][k];
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      tc.max_rel_error = std::max(tc.max_rel_error, gradient_error(a, numeric, opt.magnitude_floor));
    }
    tc.pass = tc.max_rel_error <= tolerance;
    report.pass = report.pass && tc.pass;
  }
  return report;
}

/// Self-contained check on random graphs and targets drawn from `seed`.
inline GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed, double tolerance,
                                  const GradCheckOptions& opt = {}, const LossConfig& lc = {}) {
  cfg.validate();
  const auto graphs = random_graphs(opt.batch_size, cfg.n_nodes, opt.threshold, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::vector<double> targets;
  for (int i = 0; i < opt.batch_size; ++i) {
    targets.push_back(cfg.task == Task::Regression ? normal(rng) : static_cast<double>(i % 2));
  }
  Params params = init_params(cfg, seed + 1);
  // Non-zero biases so every path carries signal.
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  for (auto& lp : params.layers) {
    for (Vec* b : {&lp.b_k, &lp.b_q, &lp.b_v, &lp.b_out})
      for (Eigen::Index i = 0; i < b->size(); ++i) (*b)(i) += small(rng);
  }
  for (Eigen::Index i = 0; i < params.b_head.size(); ++i) params.b_head(i) += small(rng);
  return grad_check(graphs, targets, std::move(params), cfg, tolerance, opt, lc);
}

}  // namespace scgt
