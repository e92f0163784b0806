#pragma once

// Self-clustering graph transformer: cluster-conditioned key/query/value
// projections, neighbourhood-masked multi-head attention with a residual
// update, concatenation readout and a prediction head. The vanilla graph
// transformer baseline shares the whole pipeline and differs only in using a
// single node-independent projection matrix for keys, queries and values.

#include "scgt/core.hpp"
#include "scgt/fc_graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace scgt {

enum class Task { Regression, Classification };
enum class Mode { Scgt, VanillaGt };

inline std::string_view to_string(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}
inline std::string_view to_string(Mode m) { return m == Mode::Scgt ? "scgt" : "vanilla-gt"; }

inline Task parse_task(std::string_view s) {
  if (s == "regression") return Task::Regression;
  if (s == "classification" || s == "binary-classification") return Task::Classification;
  throw ValidationError("unknown task '" + std::string(s) + "'");
}
inline Mode parse_mode(std::string_view s) {
  if (s == "scgt") return Mode::Scgt;
  if (s == "vanilla-gt" || s == "gt") return Mode::VanillaGt;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

struct ModelConfig {
  int n_nodes = 100;
  int d_pe = 100;
  std::vector<int> layer_dims{64, 64};
  int n_heads = 4;
  int k_r = 7;
  Task task = Task::Regression;
  Mode mode = Mode::Scgt;
  /// Use layer 0's theta1 in every layer instead of one per layer.
  bool tie_theta1 = false;

  [[nodiscard]] int n_layers() const { return static_cast<int>(layer_dims.size()); }
  [[nodiscard]] int layer_in(int l) const { return l == 0 ? n_nodes : layer_dims[l - 1]; }
  [[nodiscard]] int layer_out(int l) const { return layer_dims[l]; }
  [[nodiscard]] int head_dim(int l) const { return layer_in(l) / n_heads; }
  [[nodiscard]] int n_outputs() const { return task == Task::Regression ? 1 : 2; }
  [[nodiscard]] int readout_width() const { return n_nodes * layer_dims.back(); }

  void validate() const {
    require(n_nodes >= 1, "n_nodes must be positive");
    // Layer 0 adds positional encodings to the N-wide FC rows.
    require(d_pe == n_nodes, "d_pe must equal n_nodes (node features and encodings are summed)");
    require(!layer_dims.empty(), "layer_dims must be non-empty");
    require(n_heads >= 1, "n_heads must be positive");
    require(k_r >= 2, "k_r must be at least 2");
    for (int l = 0; l < n_layers(); ++l) {
      require(layer_dims[l] >= 1, "layer widths must be positive");
      if (layer_in(l) % n_heads != 0) {
        std::ostringstream os;
        os << "layer " << l << " input width " << layer_in(l) << " is not divisible by n_heads "
           << n_heads;
        throw ValidationError(os.str());
      }
    }
  }
};

struct LayerParams {
  Mat theta1;  ///< k_r x d_pe; empty for l > 0 when theta1 is tied
  Mat theta_k2, theta_q2, theta_v2;  ///< (d_in*d_in) x k_r; empty in vanilla mode
  /// Length d_in*d_in, reshaped row-major to d_in x d_in. In vanilla mode these
  /// are the shared key/query/value matrices themselves.
  Vec b_k, b_q, b_v;
  Mat w_out;  ///< d_out x d_in
  Vec b_out;  ///< d_out
};

struct Params {
  std::vector<LayerParams> layers;
  Mat w_head;  ///< n_outputs x (N * d_last)
  Vec b_head;  ///< n_outputs
};

/// Visits every non-empty trainable tensor in a fixed order with a stable name.
/// Works on const and non-const Params.
template <class P, class F>
void for_each_tensor(P& params, F&& f) {
  auto visit = [&](std::string name, auto& t) {
    if (t.size() > 0) f(name, t);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& lp = params.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    visit(p + "theta1", lp.theta1);
    visit(p + "theta_k2", lp.theta_k2);
    visit(p + "theta_q2", lp.theta_q2);
    visit(p + "theta_v2", lp.theta_v2);
    visit(p + "b_k", lp.b_k);
    visit(p + "b_q", lp.b_q);
    visit(p + "b_v", lp.b_v);
    visit(p + "w_out", lp.w_out);
    visit(p + "b_out", lp.b_out);
  }
  visit(std::string("head.w"), params.w_head);
  visit(std::string("head.b"), params.b_head);
}

inline Params zeros_like(const Params& p) {
  Params z = p;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

/// acc += g, tensor by tensor.
inline void add_into(Params& acc, const Params& g) {
  std::vector<const double*> src;
  for_each_tensor(g, [&](const std::string&, const auto& t) { src.push_back(t.data()); });
  std::size_t k = 0;
  for_each_tensor(acc, [&](const std::string&, auto& t) {
    const double* s = src[k++];
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += s[i];
  });
}

inline std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

/// theta1 used by layer l (layer 0's when tied).
inline const Mat& theta1_for(const Params& p, const ModelConfig& cfg, int l) {
  return cfg.tie_theta1 ? p.layers[0].theta1 : p.layers[l].theta1;
}
inline Mat& theta1_for(Params& p, const ModelConfig& cfg, int l) {
  return cfg.tie_theta1 ? p.layers[0].theta1 : p.layers[l].theta1;
}

namespace detail {

template <class Rng>
void glorot_fill(auto& t, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, deterministic in (config, seed).
/// In vanilla mode the shared projection matrices are weights and get the
/// Glorot fill with fan_in = fan_out = d_in.
inline Params init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Params p;
  p.layers.resize(cfg.layer_dims.size());
  for (int l = 0; l < cfg.n_layers(); ++l) {
    LayerParams& lp = p.layers[l];
    const Eigen::Index d = cfg.layer_in(l);
    const Eigen::Index dd = d * d;
    if (cfg.mode == Mode::Scgt) {
      if (l == 0 || !cfg.tie_theta1) {
        lp.theta1.resize(cfg.k_r, cfg.d_pe);
        detail::glorot_fill(lp.theta1, cfg.d_pe, cfg.k_r, rng);
      }
      for (Mat* t : {&lp.theta_k2, &lp.theta_q2, &lp.theta_v2}) {
        t->resize(dd, cfg.k_r);
        detail::glorot_fill(*t, cfg.k_r, dd, rng);
      }
      for (Vec* b : {&lp.b_k, &lp.b_q, &lp.b_v}) *b = Vec::Zero(dd);
    } else {
      for (Vec* b : {&lp.b_k, &lp.b_q, &lp.b_v}) {
        b->resize(dd);
        detail::glorot_fill(*b, d, d, rng);
      }
    }
    lp.w_out.resize(cfg.layer_out(l), d);
    detail::glorot_fill(lp.w_out, d, cfg.layer_out(l), rng);
    lp.b_out = Vec::Zero(cfg.layer_out(l));
  }
  p.w_head.resize(cfg.n_outputs(), cfg.readout_width());
  detail::glorot_fill(p.w_head, cfg.readout_width(), cfg.n_outputs(), rng);
  p.b_head = Vec::Zero(cfg.n_outputs());
  return p;
}

/// Checks every tensor shape against the config.
inline void validate_params(const Params& p, const ModelConfig& cfg) {
  cfg.validate();
  require(static_cast<int>(p.layers.size()) == cfg.n_layers(), "layer count mismatch");
  auto shape = [](const auto& t, Eigen::Index r, Eigen::Index c, const std::string& name) {
    if (t.rows() != r || t.cols() != c) {
      std::ostringstream os;
      os << name << " has shape " << t.rows() << "x" << t.cols() << ", expected " << r << "x" << c;
      throw ValidationError(os.str());
    }
  };
  for (int l = 0; l < cfg.n_layers(); ++l) {
    const LayerParams& lp = p.layers[l];
    const Eigen::Index d = cfg.layer_in(l);
    const std::string pre = "layers." + std::to_string(l) + ".";
    if (cfg.mode == Mode::Scgt) {
      if (l == 0 || !cfg.tie_theta1) shape(lp.theta1, cfg.k_r, cfg.d_pe, pre + "theta1");
      shape(lp.theta_k2, d * d, cfg.k_r, pre + "theta_k2");
      shape(lp.theta_q2, d * d, cfg.k_r, pre + "theta_q2");
      shape(lp.theta_v2, d * d, cfg.k_r, pre + "theta_v2");
    }
    shape(lp.b_k, d * d, 1, pre + "b_k");
    shape(lp.b_q, d * d, 1, pre + "b_q");
    shape(lp.b_v, d * d, 1, pre + "b_v");
    shape(lp.w_out, cfg.layer_out(l), d, pre + "w_out");
    shape(lp.b_out, cfg.layer_out(l), 1, pre + "b_out");
  }
  shape(p.w_head, cfg.n_outputs(), cfg.readout_width(), "head.w");
  shape(p.b_head, cfg.n_outputs(), 1, "head.b");
}

/// Soft community membership: row i = ReLU(theta1 * lambda_i).
inline Mat cluster_membership(const Mat& theta1, const Mat& pos_enc) {
  require(theta1.cols() == pos_enc.cols(), "theta1 and pos_enc widths disagree");
  return (pos_enc * theta1.transpose()).cwiseMax(0.0);
}

/// Row-major d x d matrix stored in a flat vector.
inline Mat reshape_square(const Eigen::Ref<const Vec>& flat, Eigen::Index d) {
  require(flat.size() == d * d, "flat size is not d*d");
  return Eigen::Map<const Mat>(flat.data(), d, d);
}

inline Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

/// Basis matrix c of a projection generator (column c of theta2, reshaped).
inline Mat basis_matrix(const Mat& theta2, Eigen::Index c, Eigen::Index d) {
  Mat b(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index s = 0; s < d; ++s) b(r, s) = theta2(r * d + s, c);
  return b;
}

/// Materialised per-node projections: row i holds W_i = reshape(theta2 m_i + bias)
/// flattened row-major, so the result is an N x (d*d) matrix.
inline Mat node_projections(const Mat& membership, const Mat& theta2, const Vec& bias) {
  require(theta2.cols() == membership.cols(), "theta2 columns must equal k_r");
  require(theta2.rows() == bias.size(), "theta2 rows must equal bias length");
  Mat flat = membership * theta2.transpose();
  flat.rowwise() += bias.transpose();
  return flat;
}

/// Node i's projection matrix from a node_projections result.
inline Mat node_projection(const Mat& flat, Eigen::Index i) {
  const auto d = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(flat.cols()))));
  return reshape_square(flat.row(i).transpose(), d);
}

/// Attention support of node i: {j : adjacency[i][j] != 0} plus i itself.
inline std::vector<std::vector<Eigen::Index>> attention_support(const Mat& adjacency) {
  const Eigen::Index n = adjacency.rows();
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || adjacency(i, j) != 0.0) nbrs[i].push_back(j);
    }
  }
  return nbrs;
}

struct LayerTrace {
  Mat input;           ///< N x d_in, the layer's h-hat
  Mat pre_membership;  ///< N x k_r, theta1 * lambda_i (scgt only)
  Mat membership;      ///< N x k_r, ReLU of the above (scgt only)
  Mat keys, queries, values;     ///< N x d_in
  std::vector<Mat> attention;    ///< one N x N matrix per head
  Mat residual;        ///< N x d_in, input + concatenated head outputs
  Mat pre_activation;  ///< N x d_out
  Mat output;          ///< N x d_out
  /// X * B_c^T for every basis c of the key, query and value generators (scgt only).
  std::array<std::vector<Mat>, 3> basis_images;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Vec graph_vector;  ///< concatenation of the final node states, length N * d_last
  Vec prediction;    ///< 1 value (regression) or 2 logits (classification)

  [[nodiscard]] const Mat& node_states(std::size_t l) const { return layers[l].output; }
};

namespace detail {

inline void check_finite(const Mat& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + where);
}

/// Keys, queries or values for every node.
/// scgt: P = X B0^T + sum_c diag(m_c) X B_c^T; vanilla: P = X B0^T.
inline Mat project(const Mat& x, const Mat& membership, const Mat& theta2, const Vec& bias,
                   std::vector<Mat>* images) {
  const Eigen::Index d = x.cols();
  Mat out = x * reshape_square(bias, d).transpose();
  if (theta2.size() == 0) return out;
  for (Eigen::Index c = 0; c < theta2.cols(); ++c) {
    Mat img = x * basis_matrix(theta2, c, d).transpose();
    out.noalias() += membership.col(c).asDiagonal() * img;
    if (images) images->push_back(std::move(img));
  }
  return out;
}

}  // namespace detail

/// One self-clustering (or vanilla) attention layer.
/// theta1 is the membership generator for this layer; it is ignored in vanilla mode.
inline Mat attention_layer(const BrainGraph& graph, const Mat& state, const LayerParams& lp,
                           const Mat& theta1, const ModelConfig& cfg, LayerTrace* trace = nullptr) {
  const Eigen::Index n = graph.n_nodes();
  const Eigen::Index d = state.cols();
  require(state.rows() == n, "state rows must equal the node count");
  require(d % cfg.n_heads == 0, "layer input width must be divisible by n_heads");
  const Eigen::Index dk = d / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  LayerTrace local;
  LayerTrace& tr = trace ? *trace : local;
  tr.input = state;
  for (auto& v : tr.basis_images) v.clear();

  const bool scgt = cfg.mode == Mode::Scgt;
  if (scgt) {
    tr.pre_membership = graph.pos_enc * theta1.transpose();
    tr.membership = tr.pre_membership.cwiseMax(0.0);
  } else {
    tr.pre_membership.resize(0, 0);
    tr.membership.resize(0, 0);
  }
  static const Mat kNone;
  const bool keep = trace != nullptr;
  tr.keys = detail::project(state, tr.membership, scgt ? lp.theta_k2 : kNone, lp.b_k,
                            keep ? &tr.basis_images[0] : nullptr);
  tr.queries = detail::project(state, tr.membership, scgt ? lp.theta_q2 : kNone, lp.b_q,
                               keep ? &tr.basis_images[1] : nullptr);
  tr.values = detail::project(state, tr.membership, scgt ? lp.theta_v2 : kNone, lp.b_v,
                              keep ? &tr.basis_images[2] : nullptr);

  const auto support = attention_support(graph.adjacency);
  Mat attended = Mat::Zero(n, d);
  tr.attention.assign(static_cast<std::size_t>(cfg.n_heads), Mat());
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Eigen::Index c0 = h * dk;
    const Mat scores = (tr.queries.middleCols(c0, dk) * tr.keys.middleCols(c0, dk).transpose()) * scale;
    Mat att = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = support[i];
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j : nb) mx = std::max(mx, scores(i, j));
      double z = 0.0;
      for (Eigen::Index j : nb) {
        const double e = std::exp(scores(i, j) - mx);
        att(i, j) = e;
        z += e;
      }
      for (Eigen::Index j : nb) att(i, j) /= z;
    }
    attended.middleCols(c0, dk).noalias() = att * tr.values.middleCols(c0, dk);
    tr.attention[h] = std::move(att);
  }
  tr.residual = state + attended;
  tr.pre_activation = tr.residual * lp.w_out.transpose();
  tr.pre_activation.rowwise() += lp.b_out.transpose();
  tr.output = tr.pre_activation.cwiseMax(0.0);
  return tr.output;
}

/// Layer-0 state: node features plus positional encodings.
inline Mat input_state(const BrainGraph& graph) {
  require(graph.node_features.cols() == graph.pos_enc.cols(),
          "node features and positional encodings must have equal width");
  return graph.node_features + graph.pos_enc;
}

inline void check_graph(const BrainGraph& graph, const ModelConfig& cfg) {
  require(graph.n_nodes() == cfg.n_nodes && graph.adjacency.cols() == cfg.n_nodes,
          "graph node count does not match config");
  require(graph.node_features.rows() == cfg.n_nodes && graph.node_features.cols() == cfg.n_nodes,
          "node features must be N x N");
  require(graph.pos_enc.rows() == cfg.n_nodes && graph.pos_enc.cols() == cfg.d_pe,
          "positional encodings must be N x d_pe");
}

/// Full forward pass. Throws NumericError naming the first layer with NaN/Inf.
inline ForwardTrace forward(const BrainGraph& graph, const Params& params, const ModelConfig& cfg) {
  check_graph(graph, cfg);
  ForwardTrace tr;
  tr.layers.resize(params.layers.size());
  Mat state = input_state(graph);
  detail::check_finite(state, "layer 0 input");
  for (int l = 0; l < cfg.n_layers(); ++l) {
    static const Mat kNone;
    const Mat& th1 = cfg.mode == Mode::Scgt ? theta1_for(params, cfg, l) : kNone;
    state = attention_layer(graph, state, params.layers[l], th1, cfg, &tr.layers[l]);
    detail::check_finite(state, "layer " + std::to_string(l));
  }
  tr.graph_vector = flatten(state);
  tr.prediction = params.w_head * tr.graph_vector + params.b_head;
  if (!tr.prediction.allFinite()) throw NumericError("non-finite values in prediction head");
  return tr;
}

}  // namespace scgt
