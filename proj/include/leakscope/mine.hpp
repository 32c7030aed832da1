#pragma once

// Mutual Information Neural Estimation.
//
// A fully connected statistics network T(x, y) is trained by gradient ascent
// on the Donsker-Varadhan bound
//
//   I(X;Y) >= E_joint[T] - log E_marginal[exp T],
//
// where marginal samples pair each x with a y permuted within the batch.
// The gradient of the log term divides by an exponential moving average of
// E[exp T] instead of the batch mean, which removes most of the small-batch
// bias in the update direction.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "leakscope/error.hpp"
#include "leakscope/histogram.hpp"
#include "leakscope/image.hpp"
#include "leakscope/random.hpp"

namespace leakscope {

template <std::floating_point Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <std::floating_point Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <std::floating_point Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct MineConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::vector<std::size_t> hidden_dims{256, 256};
  double ema_rate = 0.01;
  std::uint64_t seed = 0;
  Units units = Units::Nats;

  // Adam moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (batch_size < 2) throw InvalidArgument("batch size must be at least 2");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning rate must be finite and nonnegative");
    }
    if (!(ema_rate > 0.0 && ema_rate <= 1.0)) throw InvalidArgument("ema rate must be in (0, 1]");
    for (auto h : hidden_dims) {
      if (h == 0) throw InvalidArgument("hidden layer widths must be positive");
    }
  }
};

// Joint samples (x_t, y_t). Columns are samples.
class SamplePairSet {
 public:
  SamplePairSet(MatrixX<double> xs, MatrixX<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.cols() == 0) throw InvalidArgument("sample set is empty");
    if (xs_.cols() != ys_.cols()) {
      throw InvalidArgument("x and y sample counts differ: " + std::to_string(xs_.cols()) +
                            " vs " + std::to_string(ys_.cols()));
    }
    if (xs_.rows() == 0 || ys_.rows() == 0) throw InvalidArgument("sample vectors are empty");
    if (!xs_.allFinite() || !ys_.allFinite()) throw InvalidArgument("non-finite sample value");
  }

  template <typename Vectors>
  static SamplePairSet from_vectors(const Vectors& xs, const Vectors& ys) {
    return SamplePairSet(to_matrix(xs), to_matrix(ys));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(xs_.cols()); }
  std::size_t x_dim() const noexcept { return static_cast<std::size_t>(xs_.rows()); }
  std::size_t y_dim() const noexcept { return static_cast<std::size_t>(ys_.rows()); }
  const MatrixX<double>& xs() const noexcept { return xs_; }
  const MatrixX<double>& ys() const noexcept { return ys_; }

 private:
  template <typename Vectors>
  static MatrixX<double> to_matrix(const Vectors& vectors) {
    if (std::ranges::empty(vectors)) throw InvalidArgument("sample set is empty");
    const auto dim = std::ranges::size(*std::ranges::begin(vectors));
    MatrixX<double> m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(std::ranges::size(vectors)));
    Eigen::Index col = 0;
    for (const auto& v : vectors) {
      if (std::ranges::size(v) != dim) throw InvalidArgument("sample vectors differ in dimension");
      Eigen::Index row = 0;
      for (const auto c : v) m(row++, col) = static_cast<double>(c);
      ++col;
    }
    return m;
  }

  MatrixX<double> xs_;
  MatrixX<double> ys_;
};

template <std::floating_point Scalar>
struct NetworkGradients {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;
};

// Fully connected ReLU network with a linear scalar output.
template <std::floating_point Scalar>
class TStatNetwork {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using RowVector = RowVectorX<Scalar>;

  // Activations of every layer for one forward pass; [0] is the input.
  struct Cache {
    std::vector<Matrix> activations;
  };

  TStatNetwork() = default;

  // layer_dims = (input, hidden..., 1). Weights are Glorot-uniform, biases zero.
  TStatNetwork(std::vector<std::size_t> layer_dims, std::uint64_t seed) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2) throw InvalidArgument("network needs an input and an output layer");
    if (dims_.back() != 1) throw InvalidArgument("statistics network output must be scalar");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(dims_[l]);
      const auto out = static_cast<Eigen::Index>(dims_[l + 1]);
      if (in == 0 || out == 0) throw InvalidArgument("layer widths must be positive");
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      Matrix w(out, in);
      for (Eigen::Index c = 0; c < in; ++c)
        for (Eigen::Index r = 0; r < out; ++r)
          w(r, c) = static_cast<Scalar>(uniform_real(rng, -limit, limit));
      weights_.push_back(std::move(w));
      biases_.push_back(Vector::Zero(out));
    }
  }

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t layer_count() const noexcept { return weights_.size(); }

  const Matrix& weights(std::size_t l) const { return weights_[l]; }
  Matrix& weights(std::size_t l) { return weights_[l]; }
  const Vector& biases(std::size_t l) const { return biases_[l]; }
  Vector& biases(std::size_t l) { return biases_[l]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  // Flat parameter order: for each layer, weights column-major then biases.
  Scalar& parameter(std::size_t index) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto nw = static_cast<std::size_t>(weights_[l].size());
      if (index < nw) return weights_[l].data()[index];
      index -= nw;
      const auto nb = static_cast<std::size_t>(biases_[l].size());
      if (index < nb) return biases_[l].data()[index];
      index -= nb;
    }
    throw InvalidArgument("parameter index out of range");
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    }
    return true;
  }

  // inputs: input_dim x batch. Returns 1 x batch.
  RowVector forward(const Matrix& inputs, Cache* cache = nullptr) const {
    if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
      throw InvalidArgument("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                            std::to_string(input_dim()));
    }
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(inputs);
    }
    Matrix a = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
      if (cache) cache->activations.push_back(a);
    }
    return a;
  }

  // Accumulates d(objective)/d(params) given d(objective)/d(output) per sample.
  void backward(const Cache& cache, const RowVector& output_grad, NetworkGradients<Scalar>& grads) const {
    if (grads.weights.size() != weights_.size()) grads = zero_gradients();
    Matrix delta = output_grad;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      const Matrix& input = cache.activations[l];
      grads.weights[l].noalias() += delta * input.transpose();
      grads.biases[l] += delta.rowwise().sum();
      if (l == 0) break;
      Matrix upstream = weights_[l].transpose() * delta;
      // ReLU gate: the stored activation is positive exactly where the unit fired.
      delta = upstream.cwiseProduct((input.array() > Scalar(0)).template cast<Scalar>().matrix());
    }
  }

  NetworkGradients<Scalar> zero_gradients() const {
    NetworkGradients<Scalar> g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      g.biases.push_back(Vector::Zero(biases_[l].size()));
    }
    return g;
  }

  template <std::floating_point Other>
  TStatNetwork<Other> cast() const {
    TStatNetwork<Other> out;
    out.dims_ = dims_;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.weights_.push_back(weights_[l].template cast<Other>());
      out.biases_.push_back(biases_[l].template cast<Other>());
    }
    return out;
  }

  friend bool operator==(const TStatNetwork& a, const TStatNetwork& b) {
    if (a.dims_ != b.dims_) return false;
    for (std::size_t l = 0; l < a.weights_.size(); ++l) {
      if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
    }
    return true;
  }

 private:
  template <std::floating_point>
  friend class TStatNetwork;

  std::vector<std::size_t> dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

// log(mean(exp(values))) with max subtraction.
template <std::floating_point Scalar>
Scalar log_mean_exp(const RowVectorX<Scalar>& values) {
  const Scalar peak = values.maxCoeff();
  const Scalar sum = (values.array() - peak).exp().sum();
  return peak + std::log(sum) - std::log(static_cast<Scalar>(values.size()));
}

// mean T(joint) - log mean exp T(marginal), in nats.
template <std::floating_point Scalar>
Scalar dv_objective(const TStatNetwork<Scalar>& net, const MatrixX<Scalar>& joint,
                    const MatrixX<Scalar>& marginal) {
  if (joint.cols() == 0 || marginal.cols() == 0) throw InvalidArgument("empty batch");
  return net.forward(joint).mean() - log_mean_exp<Scalar>(net.forward(marginal));
}

namespace detail {

// `log_denominator(lme)` maps the batch log-mean-exp of the marginal
// statistics to the log of the denominator used in the gradient.
template <std::floating_point Scalar, typename Denominator>
NetworkGradients<Scalar> dv_gradient_impl(const TStatNetwork<Scalar>& net, const MatrixX<Scalar>& joint,
                                          const MatrixX<Scalar>& marginal, Denominator&& log_denominator,
                                          Scalar* objective) {
  if (joint.cols() == 0 || marginal.cols() == 0) throw InvalidArgument("empty batch");
  typename TStatNetwork<Scalar>::Cache joint_cache, marginal_cache;
  const RowVectorX<Scalar> t_joint = net.forward(joint, &joint_cache);
  const RowVectorX<Scalar> t_marg = net.forward(marginal, &marginal_cache);
  const Scalar lme = log_mean_exp<Scalar>(t_marg);
  if (objective) *objective = t_joint.mean() - lme;

  const Scalar log_den = log_denominator(lme);
  const auto nj = static_cast<Scalar>(joint.cols());
  const auto nm = static_cast<Scalar>(marginal.cols());
  const RowVectorX<Scalar> g_joint = RowVectorX<Scalar>::Constant(joint.cols(), Scalar(1) / nj);
  const RowVectorX<Scalar> g_marg = -((t_marg.array() - log_den).exp() / nm).matrix();

  auto grads = net.zero_gradients();
  net.backward(joint_cache, g_joint, grads);
  net.backward(marginal_cache, g_marg, grads);
  return grads;
}

}  // namespace detail

// Gradient of the DV objective. With `log_denominator` set, the marginal
// term's weights are exp(T_i - log_denominator) / B instead of the softmax,
// i.e. the batch mean of exp T is replaced by the supplied estimate.
template <std::floating_point Scalar>
NetworkGradients<Scalar> dv_gradient(const TStatNetwork<Scalar>& net, const MatrixX<Scalar>& joint,
                                     const MatrixX<Scalar>& marginal,
                                     std::optional<Scalar> log_denominator = std::nullopt,
                                     Scalar* objective = nullptr) {
  return detail::dv_gradient_impl<Scalar>(
      net, joint, marginal, [&](Scalar lme) { return log_denominator.value_or(lme); }, objective);
}

template <std::floating_point Scalar>
struct AdamState {
  std::vector<MatrixX<Scalar>> m_w, v_w;
  std::vector<VectorX<Scalar>> m_b, v_b;
  std::size_t step = 0;

  explicit AdamState(const TStatNetwork<Scalar>& net) {
    const auto z = net.zero_gradients();
    m_w = v_w = z.weights;
    m_b = v_b = z.biases;
  }
};

// Running estimate of E[exp T] over marginal batches, kept in log space.
struct EmaState {
  bool initialized = false;
  double log_value = 0.0;

  void update(double rate, double batch_log_mean_exp) {
    if (!initialized) {
      log_value = batch_log_mean_exp;
      initialized = true;
      return;
    }
    const double a = std::log1p(-rate) + log_value;
    const double b = std::log(rate) + batch_log_mean_exp;
    const double hi = std::max(a, b);
    log_value = rate >= 1.0 ? batch_log_mean_exp : hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  }
};

namespace detail {

template <std::floating_point Scalar, typename Param>
void adam_update(Param& param, Param& m, Param& v, const Param& grad, const MineConfig& cfg,
                 Scalar step_size) {
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  // Ascent: the objective is maximised.
  param.array() += step_size * m.array() / (v.array().sqrt() + eps);
}

template <std::floating_point Scalar>
bool gradients_finite(const NetworkGradients<Scalar>& g) {
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    if (!g.weights[l].allFinite() || !g.biases[l].allFinite()) return false;
  }
  return true;
}

}  // namespace detail

// One Adam ascent step on a (joint, marginal) batch pair. Returns the batch
// DV objective before the update. Throws TrainingError when the gradient or
// the updated parameters are not finite.
template <std::floating_point Scalar>
Scalar gradient_step(TStatNetwork<Scalar>& net, const MatrixX<Scalar>& joint,
                     const MatrixX<Scalar>& marginal, AdamState<Scalar>& opt, EmaState& ema,
                     const MineConfig& cfg, std::size_t epoch = 0, std::size_t batch = 0) {
  if (joint.cols() < 2 || marginal.cols() < 2) throw InvalidArgument("batch size must be at least 2");
  Scalar objective{};
  const auto grads = detail::dv_gradient_impl<Scalar>(
      net, joint, marginal,
      [&](Scalar lme) {
        ema.update(cfg.ema_rate, static_cast<double>(lme));
        return static_cast<Scalar>(ema.log_value);
      },
      &objective);
  if (!std::isfinite(objective) || !detail::gradients_finite(grads)) {
    throw TrainingError("non-finite gradient", epoch, batch);
  }

  ++opt.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  // Bias corrections folded into the step size; epsilon stays on the raw moment.
  const auto step_size = static_cast<Scalar>(cfg.learning_rate * std::sqrt(bc2) / bc1);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    detail::adam_update<Scalar>(net.weights(l), opt.m_w[l], opt.v_w[l], grads.weights[l], cfg, step_size);
    detail::adam_update<Scalar>(net.biases(l), opt.m_b[l], opt.v_b[l], grads.biases[l], cfg, step_size);
  }
  if (!net.all_finite()) throw TrainingError("non-finite parameter after update", epoch, batch);
  return objective;
}

struct MineTrace {
  std::vector<double> per_epoch_mi;
  double final_mi = 0.0;
  MineConfig config_echo;
};

namespace detail {

// Columns [x_i; y_perm(i)] for the listed sample indices.
template <std::floating_point Scalar>
void fill_inputs(const SamplePairSet& samples, std::span<const std::size_t> x_index,
                 std::span<const std::size_t> y_index, MatrixX<Scalar>& out) {
  const auto dx = static_cast<Eigen::Index>(samples.x_dim());
  const auto dy = static_cast<Eigen::Index>(samples.y_dim());
  out.resize(dx + dy, static_cast<Eigen::Index>(x_index.size()));
  for (std::size_t c = 0; c < x_index.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    out.col(col).head(dx) = samples.xs().col(static_cast<Eigen::Index>(x_index[c])).template cast<Scalar>();
    out.col(col).tail(dy) = samples.ys().col(static_cast<Eigen::Index>(y_index[c])).template cast<Scalar>();
  }
}

}  // namespace detail

// Trains a fresh statistics network and records the DV estimate after
// every epoch. An epoch is one pass over floor(n / batch) shuffled batches;
// the epoch readout evaluates the exact DV objective (no moving average)
// pooled over all of those batches, each with a fresh in-batch permutation.
template <std::floating_point Scalar = float>
MineTrace estimate_mi(const SamplePairSet& samples, const MineConfig& cfg) {
  cfg.validate();
  const std::size_t n = samples.size();
  if (n < cfg.batch_size) {
    throw InvalidArgument("need at least batch_size (" + std::to_string(cfg.batch_size) +
                          ") samples, got " + std::to_string(n));
  }
  std::uint64_t seed_state = cfg.seed;
  Rng train_rng(splitmix64(seed_state));
  Rng eval_rng(splitmix64(seed_state));
  const std::uint64_t init_seed = splitmix64(seed_state);

  std::vector<std::size_t> dims{samples.x_dim() + samples.y_dim()};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(1);
  TStatNetwork<Scalar> net(dims, init_seed);
  AdamState<Scalar> opt(net);
  EmaState ema;

  const std::size_t batches = n / cfg.batch_size;
  const std::size_t used = batches * cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> permuted(cfg.batch_size);
  MatrixX<Scalar> joint, marginal;

  MineTrace trace;
  trace.config_echo = cfg;
  std::vector<std::size_t> eval_perm(used);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), train_rng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * cfg.batch_size, cfg.batch_size);
      std::copy(idx.begin(), idx.end(), permuted.begin());
      shuffle(std::span<std::size_t>(permuted), train_rng);
      detail::fill_inputs<Scalar>(samples, idx, idx, joint);
      detail::fill_inputs<Scalar>(samples, idx, permuted, marginal);
      gradient_step<Scalar>(net, joint, marginal, opt, ema, cfg, epoch, b);
    }

    const std::span<const std::size_t> all(order.data(), used);
    std::copy(all.begin(), all.end(), eval_perm.begin());
    for (std::size_t b = 0; b < batches; ++b) {
      shuffle(std::span<std::size_t>(eval_perm.data() + b * cfg.batch_size, cfg.batch_size), eval_rng);
    }
    detail::fill_inputs<Scalar>(samples, all, all, joint);
    detail::fill_inputs<Scalar>(samples, all, eval_perm, marginal);
    const double mi = static_cast<double>(dv_objective<Scalar>(net, joint, marginal));
    if (!std::isfinite(mi)) throw TrainingError("non-finite epoch estimate", epoch, batches);
    trace.per_epoch_mi.push_back(nats_to(cfg.units, mi));
  }
  trace.final_mi = trace.per_epoch_mi.back();
  return trace;
}

// n_samples co-located block x block windows, flattened row-major and
// scaled by 1/255. x comes from `original`, y from `clear`.
inline SamplePairSet sample_pixel_pairs(const ImagePlane& original, const ImagePlane& clear,
                                        std::size_t block, std::size_t n_samples, std::uint64_t seed) {
  if (original.width() != clear.width() || original.height() != clear.height()) {
    throw InvalidArgument("original and clear planes differ in size");
  }
  if (block < 1 || block > std::min(original.width(), original.height())) {
    throw InvalidArgument("block size " + std::to_string(block) + " does not fit a " +
                          std::to_string(original.width()) + "x" + std::to_string(original.height()) +
                          " image");
  }
  if (n_samples < 1) throw InvalidArgument("need at least one sample");
  Rng rng(seed);
  const auto dim = static_cast<Eigen::Index>(block * block);
  MatrixX<double> xs(dim, static_cast<Eigen::Index>(n_samples));
  MatrixX<double> ys(dim, static_cast<Eigen::Index>(n_samples));
  for (std::size_t t = 0; t < n_samples; ++t) {
    const auto row = static_cast<std::size_t>(uniform_index(rng, original.height() - block + 1));
    const auto col = static_cast<std::size_t>(uniform_index(rng, original.width() - block + 1));
    Eigen::Index k = 0;
    for (std::size_t r = 0; r < block; ++r) {
      for (std::size_t c = 0; c < block; ++c, ++k) {
        xs(k, static_cast<Eigen::Index>(t)) = original(row + r, col + c) / 255.0;
        ys(k, static_cast<Eigen::Index>(t)) = clear(row + r, col + c) / 255.0;
      }
    }
  }
  return SamplePairSet(std::move(xs), std::move(ys));
}

struct LabeledSeries {
  int bits = 0;
  std::vector<double> values;
};

// |M - v| with M the maximum over every series and epoch.
inline std::vector<LabeledSeries> relative_distance_to_max(std::span<const LabeledSeries> traces) {
  if (traces.empty()) throw InvalidArgument("no traces given");
  const std::size_t epochs = traces.front().values.size();
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& t : traces) {
    if (t.values.size() != epochs) throw InvalidArgument("traces differ in epoch count");
    for (double v : t.values) peak = std::max(peak, v);
  }
  std::vector<LabeledSeries> out;
  out.reserve(traces.size());
  for (const auto& t : traces) {
    LabeledSeries r{t.bits, {}};
    r.values.reserve(epochs);
    for (double v : t.values) r.values.push_back(std::abs(peak - v));
    out.push_back(std::move(r));
  }
  return out;
}

// Trace CSV: header "epoch,mi", one row per epoch starting at 1.
inline void write_trace_csv(const std::filesystem::path& path, std::span<const double> per_epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,mi\n";
  out.precision(17);
  for (std::size_t e = 0; e < per_epoch.size(); ++e) out << (e + 1) << ',' << per_epoch[e] << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

inline std::vector<double> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,mi", 0) != 0) {
    throw FormatError("trace file " + path.string() + " lacks the 'epoch,mi' header");
  }
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("malformed trace row: " + line);
    try {
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw FormatError("malformed trace row: " + line);
    }
  }
  if (values.empty()) throw FormatError("trace file " + path.string() + " has no rows");
  return values;
}

}  // namespace leakscope
