#pragma once

// Reverse-mode differentiation for the fixed autoencoder signal path.
//
// Every layer exposes forward() which caches what its adjoint needs, and
// backward() which maps an upstream gradient to the input gradient while
// accumulating parameter gradients into the Tensor grad slots. Batched
// activations are stored column-per-sample.

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass::nn {

/// Dense real array with an attached gradient slot of the same shape.
struct Tensor {
  RealMatrix value;
  RealMatrix grad;

  Tensor() = default;
  Tensor(Index rows, Index cols) : value(RealMatrix::Zero(rows, cols)), grad(RealMatrix::Zero(rows, cols)) {}

  [[nodiscard]] Index size() const noexcept { return value.size(); }
  void zeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

class DenseLayer {
 public:
  DenseLayer(Index inDim, Index outDim) : weights_(outDim, inDim), biases_(outDim, 1) {
    if (inDim < 1 || outDim < 1) throw InvalidArgument("DenseLayer: dimensions must be positive");
  }

  [[nodiscard]] Index inDim() const noexcept { return weights_.value.cols(); }
  [[nodiscard]] Index outDim() const noexcept { return weights_.value.rows(); }
  Tensor& weights() noexcept { return weights_; }
  Tensor& biases() noexcept { return biases_; }
  [[nodiscard]] const Tensor& weights() const noexcept { return weights_; }
  [[nodiscard]] const Tensor& biases() const noexcept { return biases_; }

  /// Xavier/Glorot uniform: W ~ U(-b, b), b = sqrt(6 / (in + out)); biases zero.
  void xavierInit(RngStream& rng) {
    const double bound = xavierBound(inDim(), outDim());
    for (Index c = 0; c < weights_.value.cols(); ++c)
      for (Index r = 0; r < weights_.value.rows(); ++r) weights_.value(r, c) = rng.uniform(-bound, bound);
    biases_.value.setZero();
  }

  static double xavierBound(Index inDim, Index outDim) {
    return std::sqrt(6.0 / static_cast<double>(inDim + outDim));
  }

  /// y = W x + b for each column of x; caches x for backward.
  RealMatrix forward(const RealMatrix& x) {
    input_ = x;
    return apply(x);
  }

  [[nodiscard]] RealMatrix apply(const RealMatrix& x) const {
    if (x.rows() != inDim()) throw InvalidArgument("DenseLayer: input has wrong dimension");
    RealMatrix y = weights_.value * x;
    y.colwise() += biases_.value.col(0);
    return y;
  }

  /// Accumulates dW += g x^T and db += sum_columns(g); returns W^T g.
  RealMatrix backward(const RealMatrix& upstream) {
    if (upstream.rows() != outDim() || upstream.cols() != input_.cols())
      throw InvalidArgument("DenseLayer: upstream gradient has wrong shape");
    weights_.grad.noalias() += upstream * input_.transpose();
    biases_.grad.col(0) += upstream.rowwise().sum();
    return weights_.value.transpose() * upstream;
  }

 private:
  Tensor weights_;
  Tensor biases_;
  RealMatrix input_;
};

// ---------------------------------------------------------------------------
// Activations and loss
// ---------------------------------------------------------------------------

/// max(0, x); the subgradient at 0 is taken as 0.
class Relu {
 public:
  RealMatrix forward(const RealMatrix& x) {
    mask_ = (x.array() > 0.0).cast<double>().matrix();
    return x.cwiseMax(0.0);
  }
  [[nodiscard]] RealMatrix backward(const RealMatrix& upstream) const { return upstream.cwiseProduct(mask_); }

 private:
  RealMatrix mask_;
};

/// Column-wise softmax with max subtraction.
inline RealMatrix softmax(const RealMatrix& logits) {
  RealMatrix out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const double shift = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - shift).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

/// Adjoint of softmax: dL/dz = p * (g - <p, g>) per column.
inline RealMatrix softmaxBackward(const RealMatrix& probs, const RealMatrix& upstream) {
  RealMatrix out(probs.rows(), probs.cols());
  for (Index c = 0; c < probs.cols(); ++c) {
    const double inner = probs.col(c).dot(upstream.col(c));
    out.col(c) = probs.col(c).cwiseProduct((upstream.col(c).array() - inner).matrix());
  }
  return out;
}

inline constexpr double kLogClamp = 1e-30;

struct CrossEntropy {
  double loss = 0.0;         // summed over the batch
  std::size_t clamped = 0;   // samples whose true-class probability hit the log clamp
};

/// Categorical cross entropy summed over the batch: sum_s -log p[target_s, s].
inline CrossEntropy crossEntropyLoss(const RealMatrix& probs, const std::vector<Index>& targets) {
  if (static_cast<Index>(targets.size()) != probs.cols())
    throw InvalidArgument("crossEntropyLoss: one target per column required");
  CrossEntropy out;
  for (Index c = 0; c < probs.cols(); ++c) {
    const Index t = targets[static_cast<std::size_t>(c)];
    if (t < 0 || t >= probs.rows()) throw InvalidArgument("crossEntropyLoss: target out of range");
    double p = probs(t, c);
    if (p < kLogClamp) {
      p = kLogClamp;
      ++out.clamped;
    }
    out.loss -= std::log(p);
  }
  return out;
}

/// dL/dp for the summed cross entropy (unfused path).
inline RealMatrix crossEntropyGrad(const RealMatrix& probs, const std::vector<Index>& targets) {
  RealMatrix g = RealMatrix::Zero(probs.rows(), probs.cols());
  for (Index c = 0; c < probs.cols(); ++c) {
    const Index t = targets[static_cast<std::size_t>(c)];
    g(t, c) = -1.0 / std::max(probs(t, c), kLogClamp);
  }
  return g;
}

/// Fused softmax + cross entropy gradient with respect to the logits: p - onehot.
inline RealMatrix softmaxCrossEntropyGrad(const RealMatrix& probs, const std::vector<Index>& targets) {
  RealMatrix g = probs;
  for (Index c = 0; c < probs.cols(); ++c) g(targets[static_cast<std::size_t>(c)], c) -= 1.0;
  return g;
}

// ---------------------------------------------------------------------------
// Multi-layer perceptron
// ---------------------------------------------------------------------------

/// Dense stack with ReLU between layers and a linear output layer.
class Mlp {
 public:
  /// widths = [in, hidden..., out]
  explicit Mlp(const std::vector<Index>& widths) : widths_(widths) {
    if (widths.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers_.emplace_back(widths[i], widths[i + 1]);
    relus_.resize(layers_.size() - 1);
  }

  void xavierInit(RngStream& rng) {
    for (auto& l : layers_) l.xavierInit(rng);
  }

  RealMatrix forward(const RealMatrix& x) {
    RealMatrix h = layers_.front().forward(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].forward(relus_[i - 1].forward(h));
    return h;
  }

  [[nodiscard]] RealMatrix apply(const RealMatrix& x) const {
    RealMatrix h = layers_.front().apply(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].apply(h.cwiseMax(0.0));
    return h;
  }

  RealMatrix backward(const RealMatrix& upstream) {
    RealMatrix g = layers_.back().backward(upstream);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i].backward(relus_[i].backward(g));
    return g;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weights());
      out.push_back(&l.biases());
    }
    return out;
  }

  void zeroGrad() {
    for (auto* p : parameters()) p->zeroGrad();
  }

  [[nodiscard]] const std::vector<Index>& widths() const noexcept { return widths_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

 private:
  std::vector<Index> widths_;
  std::vector<DenseLayer> layers_;
  std::vector<Relu> relus_;
};

// ---------------------------------------------------------------------------
// Signal-path reshapes
// ---------------------------------------------------------------------------

/// Vector of length 2*T*cols -> 2T x cols matrix [X1; X2]. The first T*cols
/// entries fill X1 column-major, the rest fill X2 column-major.
inline RealMatrix reshapePhi(const RealVector& v, Index t, Index cols) {
  if (v.size() != 2 * t * cols) throw InvalidArgument("reshapePhi: vector length must be 2*T*cols");
  RealMatrix x(2 * t, cols);
  x.topRows(t) = Eigen::Map<const RealMatrix>(v.data(), t, cols);
  x.bottomRows(t) = Eigen::Map<const RealMatrix>(v.data() + t * cols, t, cols);
  return x;
}

/// Inverse of reshapePhi. Also the adjoint of reshapePhi (and vice versa) since both are permutations.
inline RealVector phiInv(const RealMatrix& x) {
  if (x.rows() % 2 != 0) throw InvalidArgument("phiInv: matrix needs an even number of rows");
  const Index t = x.rows() / 2, cols = x.cols();
  RealVector v(2 * t * cols);
  Eigen::Map<RealMatrix>(v.data(), t, cols) = x.topRows(t);
  Eigen::Map<RealMatrix>(v.data() + t * cols, t, cols) = x.bottomRows(t);
  return v;
}

/// [X1; X2] (2T x n) -> [[X1, -X2], [X2, X1]] (2T x 2n).
inline RealMatrix widenPsi(const RealMatrix& x) {
  if (x.rows() % 2 != 0) throw InvalidArgument("widenPsi: input needs an even number of rows");
  const Index t = x.rows() / 2, n = x.cols();
  RealMatrix out(2 * t, 2 * n);
  out.topLeftCorner(t, n) = x.topRows(t);
  out.topRightCorner(t, n) = -x.bottomRows(t);
  out.bottomLeftCorner(t, n) = x.bottomRows(t);
  out.bottomRightCorner(t, n) = x.topRows(t);
  return out;
}

/// Left block column of a 2T x 2n matrix.
inline RealMatrix psiInv(const RealMatrix& x) {
  if (x.rows() % 2 != 0 || x.cols() % 2 != 0) throw InvalidArgument("psiInv: input needs even dimensions");
  return x.leftCols(x.cols() / 2);
}

/// Adjoint of widenPsi: each entry of [X1; X2] appears twice, once negated for X2.
inline RealMatrix widenPsiBackward(const RealMatrix& g) {
  const Index t = g.rows() / 2, n = g.cols() / 2;
  RealMatrix out(2 * t, n);
  out.topRows(t) = g.topLeftCorner(t, n) + g.bottomRightCorner(t, n);
  out.bottomRows(t) = g.bottomLeftCorner(t, n) - g.topRightCorner(t, n);
  return out;
}

/// Adjoint of psiInv: gradient lands in the left block column.
inline RealMatrix psiInvBackward(const RealMatrix& g) {
  RealMatrix out = RealMatrix::Zero(g.rows(), 2 * g.cols());
  out.leftCols(g.cols()) = g;
  return out;
}

// ---------------------------------------------------------------------------
// Orthonormalization layer
// ---------------------------------------------------------------------------

/// X -> X (X^T X)^{-1/2}.
///
/// The forward pass uses the exact inverse square root from the eigensolver.
/// The backward pass differentiates a coupled Newton-Schulz iteration
///   Y0 = A/c, Z0 = I,  Tk = (3I - Zk Yk)/2,  Yk+1 = Yk Tk,  Zk+1 = Tk Zk,
/// with c = trace(A), whose limit Z/sqrt(c) is A^{-1/2}. Each step is a
/// matrix product, so the adjoint is a mechanical reverse sweep. The
/// iteration runs at least kMinIterations steps and continues until Z stops
/// changing, so the differentiated map agrees with the exact forward.
class Orthonormalizer {
 public:
  static constexpr int kMinIterations = 15;
  static constexpr int kMaxIterations = 80;

  /// Throws NearSingularError when the Gram matrix is below the guard.
  RealMatrix forward(const RealMatrix& x) {
    if (x.cols() > x.rows()) throw InvalidArgument("Orthonormalizer: more columns than rows");
    input_ = x;
    gram_ = x.transpose() * x;
    invSqrt_ = psdInvSqrt(gram_);
    return x * invSqrt_;
  }

  RealMatrix backward(const RealMatrix& upstream) {
    const Index n = gram_.rows();
    const RealMatrix eye = RealMatrix::Identity(n, n);
    const double c = gram_.trace();

    // Forward Newton-Schulz tape.
    std::vector<RealMatrix> ys{gram_ / c}, zs{eye}, ts;
    for (int k = 0; k < kMaxIterations; ++k) {
      ts.push_back(0.5 * (3.0 * eye - zs.back() * ys.back()));
      ys.push_back(ys.back() * ts.back());
      zs.push_back(ts.back() * zs[zs.size() - 1]);
      const double change = (zs.back() - zs[zs.size() - 2]).norm();
      if (k + 1 >= kMinIterations && change <= 1e-15 * zs.back().norm()) break;
    }
    iterations_ = static_cast<int>(ts.size());

    const RealMatrix& zFinal = zs.back();
    const double invRootC = 1.0 / std::sqrt(c);

    // out = X R  ->  dX = G R^T, dR = X^T G
    RealMatrix dInput = upstream * invSqrt_.transpose();
    const RealMatrix dR = input_.transpose() * upstream;

    // R = Z_K c^{-1/2}
    RealMatrix dZ = dR * invRootC;
    double dC = -0.5 * invRootC / c * dR.cwiseProduct(zFinal).sum();
    RealMatrix dY = RealMatrix::Zero(n, n);

    for (std::size_t k = ts.size(); k-- > 0;) {
      const RealMatrix& yk = ys[k];
      const RealMatrix& zk = zs[k];
      const RealMatrix& tk = ts[k];
      // Y_{k+1} = Y_k T_k ; Z_{k+1} = T_k Z_k
      RealMatrix dT = yk.transpose() * dY + dZ * zk.transpose();
      RealMatrix dYk = dY * tk.transpose();
      RealMatrix dZk = tk.transpose() * dZ;
      // T_k = 1.5 I - 0.5 Z_k Y_k
      dZk -= 0.5 * dT * yk.transpose();
      dYk -= 0.5 * zk.transpose() * dT;
      dY = std::move(dYk);
      dZ = std::move(dZk);
    }
    // Y_0 = A / c ; Z_0 = I is constant
    RealMatrix dA = dY / c;
    dC -= dY.cwiseProduct(gram_).sum() / (c * c);
    dA += dC * eye;
    // A = X^T X
    dInput += input_ * (dA + dA.transpose());
    return dInput;
  }

  /// Newton-Schulz steps used by the last backward call.
  [[nodiscard]] int iterations() const noexcept { return iterations_; }

 private:
  RealMatrix input_;
  RealMatrix gram_;
  RealMatrix invSqrt_;
  int iterations_ = 0;
};

/// Orthonormalization through the SVD, X = U S V^T -> U V^T. Forward only;
/// agrees with Orthonormalizer::forward and serves as a validation path.
inline RealMatrix orthonormalizeSvd(const RealMatrix& x) {
  const SymmetricEigen eig = symEig(x.transpose() * x);
  const double guard = 1e-10 * eig.values.sum() / static_cast<double>(eig.values.size());
  if (!(eig.values.minCoeff() > guard)) throw NearSingularError("orthonormalizeSvd: rank-deficient input");
  const RealVector sigma = eig.values.cwiseSqrt();
  const RealMatrix u = x * eig.vectors * sigma.cwiseInverse().asDiagonal();
  return u * eig.vectors.transpose();
}

/// Scales the input to a fixed Frobenius norm. Replaces the orthonormalization
/// layer in the non-unitary ablation (an average-power constraint only).
class PowerNormalizer {
 public:
  explicit PowerNormalizer(double targetNorm) : target_(targetNorm) {}

  RealMatrix forward(const RealMatrix& x) {
    norm_ = x.norm();
    if (!(norm_ > 0.0)) throw NearSingularError("PowerNormalizer: zero input");
    unit_ = x / norm_;
    return target_ * unit_;
  }

  [[nodiscard]] RealMatrix backward(const RealMatrix& upstream) const {
    return (target_ / norm_) * (upstream - unit_ * unit_.cwiseProduct(upstream).sum());
  }

 private:
  double target_;
  double norm_ = 0.0;
  RealMatrix unit_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
  double learningRate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction, in the parameterization used by common frameworks:
/// p -= lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    for (const auto* p : params_) {
      first_.push_back(RealMatrix::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(RealMatrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++stepCount_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(stepCount_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(stepCount_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      first_[i] = b1 * first_[i] + (1.0 - b1) * p.grad;
      second_[i] = b2 * second_[i] + (1.0 - b2) * p.grad.cwiseAbs2();
      p.value.array() -= options_.learningRate * (first_[i].array() / correction1) /
                         ((second_[i].array() / correction2).sqrt() + options_.epsilon);
    }
  }

  void zeroGrad() {
    for (auto* p : params_) p->zeroGrad();
  }

  [[nodiscard]] std::int64_t stepCount() const noexcept { return stepCount_; }
  void setStepCount(std::int64_t n) noexcept { stepCount_ = n; }
  [[nodiscard]] const AdamOptions& options() const noexcept { return options_; }
  std::vector<RealMatrix>& firstMoments() noexcept { return first_; }
  std::vector<RealMatrix>& secondMoments() noexcept { return second_; }

 private:
  std::vector<Tensor*> params_;
  AdamOptions options_;
  std::vector<RealMatrix> first_;
  std::vector<RealMatrix> second_;
  std::int64_t stepCount_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
// Layout: one line of JSON header, a newline, then a blob of IEEE binary64
// values in little-endian byte order. For every network in header order and
// every layer: weights row-major, then biases. With optimizer state present,
// Adam first moments and then second moments follow in the same order.

inline constexpr const char* kCheckpointFormat = "ncgrass-checkpoint";

namespace detail {

inline void writeLe(std::ostream& os, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  os.write(bytes.data(), 8);
}

inline double readLe(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!is) throw FormatError("checkpoint: truncated parameter blob");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void writeMatrix(std::ostream& os, const RealMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) writeLe(os, m(r, c));
}

inline void readMatrix(std::istream& is, RealMatrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = readLe(is);
}

}  // namespace detail

struct NamedNetwork {
  std::string name;
  Mlp* network;
};

inline void writeCheckpoint(std::ostream& os, const std::vector<NamedNetwork>& networks, std::uint64_t seed,
                            Adam* adam, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json header = {{"format", kCheckpointFormat},
                           {"version", 1},
                           {"byte_order", "little-endian"},
                           {"seed", seed},
                           {"optimizer_state", adam != nullptr},
                           {"extra", extra}};
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& n : networks) {
    nlohmann::json layers = nlohmann::json::array();
    const auto& ls = n.network->layers();
    for (std::size_t i = 0; i < ls.size(); ++i)
      layers.push_back({{"in", ls[i].inDim()},
                        {"out", ls[i].outDim()},
                        {"activation", i + 1 == ls.size() ? "identity" : "relu"}});
    nets.push_back({{"name", n.name}, {"layers", layers}});
  }
  header["networks"] = nets;
  if (adam) {
    header["adam"] = {{"step", adam->stepCount()},
                      {"learning_rate", adam->options().learningRate},
                      {"beta1", adam->options().beta1},
                      {"beta2", adam->options().beta2},
                      {"epsilon", adam->options().epsilon}};
  }
  os << header.dump() << '\n';
  for (const auto& n : networks)
    for (const auto& l : n.network->layers()) {
      detail::writeMatrix(os, l.weights().value);
      detail::writeMatrix(os, l.biases().value);
    }
  if (adam) {
    for (const auto& m : adam->firstMoments()) detail::writeMatrix(os, m);
    for (const auto& m : adam->secondMoments()) detail::writeMatrix(os, m);
  }
}

/// Reads parameters into networks whose shapes must match the header. Returns the header.
inline nlohmann::json readCheckpoint(std::istream& is, const std::vector<NamedNetwork>& networks,
                                     Adam* adam = nullptr) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != kCheckpointFormat || header.at("version").get<int>() != 1)
      throw FormatError("checkpoint: unsupported format or version");
    const auto& nets = header.at("networks");
    if (nets.size() != networks.size()) throw FormatError("checkpoint: network count mismatch");
    for (std::size_t i = 0; i < networks.size(); ++i) {
      const auto& layers = nets[i].at("layers");
      const auto& ls = networks[i].network->layers();
      if (nets[i].at("name").get<std::string>() != networks[i].name || layers.size() != ls.size())
        throw FormatError("checkpoint: network layout mismatch for " + networks[i].name);
      for (std::size_t k = 0; k < ls.size(); ++k)
        if (layers[k].at("in").get<Index>() != ls[k].inDim() || layers[k].at("out").get<Index>() != ls[k].outDim())
          throw FormatError("checkpoint: layer shape mismatch in " + networks[i].name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  for (const auto& n : networks)
    for (auto& l : n.network->layers()) {
      detail::readMatrix(is, l.weights().value);
      detail::readMatrix(is, l.biases().value);
    }
  if (adam && header.at("optimizer_state").get<bool>()) {
    for (auto& m : adam->firstMoments()) detail::readMatrix(is, m);
    for (auto& m : adam->secondMoments()) detail::readMatrix(is, m);
    adam->setStepCount(header.at("adam").at("step").get<std::int64_t>());
  }
  return header;
}

}  // namespace ncgrass::nn
