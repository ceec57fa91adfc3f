#pragma once

// Autoencoder for Grassmannian constellation learning.
//
//   one-hot(m) -> encoder MLP -> v (2 T Nt) -> phi -> psi -> orthonormalize -> Xbar
//   Xbar -> channel layer (Xbar Hbar + s Wbar) -> Ybar
//   Ybar -> psi^-1 -> phi^-1 -> u (2 T Nr) -> decoder MLP -> softmax -> p
//
// The encoder input is one-hot, so a batch only ever needs the M distinct
// encoder outputs. Each training step therefore runs the encoder once on the
// M x M identity, gathers codewords per sample, and scatters the per-sample
// gradients back onto the M messages before the encoder backward pass.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ncgrass/channel.hpp"
#include "ncgrass/constellation.hpp"
#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"
#include "ncgrass/nn.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass {

enum class TrainMode { Grassmannian, AblationNonunitary };

inline std::string toString(TrainMode mode) {
  return mode == TrainMode::Grassmannian ? "grassmannian" : "ablation-nonunitary";
}

inline TrainMode trainModeFromString(const std::string& s) {
  if (s == "grassmannian") return TrainMode::Grassmannian;
  if (s == "ablation-nonunitary" || s == "ablation") return TrainMode::AblationNonunitary;
  throw ConfigError("unknown training mode '" + s + "' (expected grassmannian or ablation-nonunitary)");
}

struct TrainConfig {
  int m = 16;
  int t = 4;
  int nt = 2;
  int nr = 2;
  std::vector<int> encoderHidden{256, 256};
  std::vector<int> decoderHidden{256, 256};
  int batchSize = 500;
  int epochs = 30;
  int batchesPerEpoch = 50;
  double learningRate = 3e-4;
  double trainSnrDb = 15.0;
  ChannelModel channelModel = ChannelModel::IidRayleigh;
  double channelR = 0.0;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::Grassmannian;
  bool cycleMessages = false;  // batch s carries message s mod M instead of a uniform draw

  [[nodiscard]] ChannelConfig channel() const {
    ChannelConfig c;
    c.nt = nt;
    c.nr = nr;
    c.t = t;
    c.model = channelModel;
    c.r = channelR;
    c.snrDb = trainSnrDb;
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (m < 2) throw ConfigError("train: m must be at least 2");
    if (t < 1 || nt < 1 || nr < 1) throw ConfigError("train: t, nt and nr must be positive");
    if (nt > t) throw ConfigError("train: nt must not exceed t");
    for (int w : encoderHidden)
      if (w < 1) throw ConfigError("train: encoder_hidden widths must be positive");
    for (int w : decoderHidden)
      if (w < 1) throw ConfigError("train: decoder_hidden widths must be positive");
    if (batchSize < 1 || epochs < 1 || batchesPerEpoch < 1)
      throw ConfigError("train: batch_size, epochs and batches_per_epoch must be positive");
    if (!(learningRate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!std::isfinite(trainSnrDb)) throw ConfigError("train: train_snr_db must be finite");
    channel().validate();
  }

  /// O_T = [M, hidden..., 2 T Nt]
  [[nodiscard]] std::vector<Index> encoderWidths() const {
    std::vector<Index> w{m};
    for (int h : encoderHidden) w.push_back(h);
    w.push_back(2 * t * nt);
    return w;
  }

  /// O_R = [2 T Nr, hidden..., M]
  [[nodiscard]] std::vector<Index> decoderWidths() const {
    std::vector<Index> w{2 * t * nr};
    for (int h : decoderHidden) w.push_back(h);
    w.push_back(m);
    return w;
  }
};

inline nlohmann::json toJson(const TrainConfig& c) {
  return {{"m", c.m},
          {"t", c.t},
          {"nt", c.nt},
          {"nr", c.nr},
          {"encoder_hidden", c.encoderHidden},
          {"decoder_hidden", c.decoderHidden},
          {"batch_size", c.batchSize},
          {"epochs", c.epochs},
          {"batches_per_epoch", c.batchesPerEpoch},
          {"learning_rate", c.learningRate},
          {"train_snr_db", c.trainSnrDb},
          {"channel", {{"model", toString(c.channelModel)}, {"r", c.channelR}}},
          {"seed", c.seed},
          {"mode", toString(c.mode)},
          {"cycle_messages", c.cycleMessages}};
}

inline TrainConfig trainConfigFromJson(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    TrainConfig c;
    c.m = j.value("m", c.m);
    c.t = j.value("t", c.t);
    c.nt = j.value("nt", c.nt);
    c.nr = j.value("nr", c.nr);
    c.encoderHidden = j.value("encoder_hidden", c.encoderHidden);
    c.decoderHidden = j.value("decoder_hidden", c.decoderHidden);
    c.batchSize = j.value("batch_size", c.batchSize);
    c.epochs = j.value("epochs", c.epochs);
    c.batchesPerEpoch = j.value("batches_per_epoch", c.batchesPerEpoch);
    c.learningRate = j.value("learning_rate", c.learningRate);
    c.trainSnrDb = j.value("train_snr_db", c.trainSnrDb);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = trainModeFromString(j.at("mode").get<std::string>());
    c.cycleMessages = j.value("cycle_messages", c.cycleMessages);
    if (j.contains("channel")) {
      const auto& ch = j.at("channel");
      // Antenna and block sizes come from the top level; the channel block may repeat them.
      ChannelConfig defaults = c.channel();
      const ChannelConfig parsed = channelConfigFromJson(ch, defaults);
      if (parsed.nt != c.nt || parsed.nr != c.nr || parsed.t != c.t)
        throw ConfigError("train: channel nt/nr/t disagree with the top-level values");
      c.channelModel = parsed.model;
      c.channelR = parsed.r;
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Channel layer
// ---------------------------------------------------------------------------

/// One realization of the non-trainable channel layer: H (Nt x Nr) and W (T x Nr).
struct ChannelDraw {
  ComplexMatrix h;
  ComplexMatrix w;
};

inline ChannelDraw drawChannel(const FadingChannel& channel, RngStream& rng) {
  ChannelDraw d;
  d.h = channel.sample(rng);
  d.w = sampleComplexGaussian(channel.config().t, channel.config().nr, rng);
  return d;
}

/// Ybar = Xbar Hbar + scale * Wbar in the real embedding.
inline RealMatrix channelLayerForward(const RealMatrix& xbar, const ChannelDraw& draw, double scale) {
  RealMatrix y = xbar * embedDense(draw.h);
  if (scale != 0.0) y += scale * embedDense(draw.w);
  return y;
}

/// Adjoint with respect to Xbar: H and W are constants of the draw.
inline RealMatrix channelLayerBackward(const RealMatrix& upstream, const ChannelDraw& draw) {
  return upstream * embedDense(draw.h).transpose();
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kTrainStream = 2;

class Autoencoder {
 public:
  explicit Autoencoder(const TrainConfig& cfg)
      : cfg_(cfg), encoder_(cfg.encoderWidths()), decoder_(cfg.decoderWidths()),
        orthonormalizers_(static_cast<std::size_t>(cfg.m)),
        powerNormalizers_(static_cast<std::size_t>(cfg.m), nn::PowerNormalizer(std::sqrt(2.0 * cfg.nt))) {
    cfg_.validate();
    RngStream rng(cfg.seed, kInitStream);
    encoder_.xavierInit(rng);
    decoder_.xavierInit(rng);
  }

  [[nodiscard]] const TrainConfig& config() const noexcept { return cfg_; }
  nn::Mlp& encoder() noexcept { return encoder_; }
  nn::Mlp& decoder() noexcept { return decoder_; }

  std::vector<nn::Tensor*> parameters() {
    auto p = encoder_.parameters();
    for (auto* d : decoder_.parameters()) p.push_back(d);
    return p;
  }

  void zeroGrad() {
    for (auto* p : parameters()) p->zeroGrad();
  }

  /// Encoder outputs Xbar (2T x 2Nt) for all M messages, caching for backward.
  std::vector<RealMatrix> encodeAllForward() {
    const RealMatrix v = encoder_.forward(RealMatrix::Identity(cfg_.m, cfg_.m));
    std::vector<RealMatrix> out;
    out.reserve(static_cast<std::size_t>(cfg_.m));
    for (Index k = 0; k < cfg_.m; ++k) {
      const RealMatrix widened = nn::widenPsi(nn::reshapePhi(v.col(k), cfg_.t, cfg_.nt));
      out.push_back(cfg_.mode == TrainMode::Grassmannian
                        ? orthonormalizers_[static_cast<std::size_t>(k)].forward(widened)
                        : powerNormalizers_[static_cast<std::size_t>(k)].forward(widened));
    }
    return out;
  }

  /// Backward through normalization, psi, phi and the encoder MLP.
  void encodeAllBackward(const std::vector<RealMatrix>& dXbar) {
    RealMatrix dV(2 * cfg_.t * cfg_.nt, cfg_.m);
    for (Index k = 0; k < cfg_.m; ++k) {
      const auto& g = dXbar[static_cast<std::size_t>(k)];
      const RealMatrix dWidened = cfg_.mode == TrainMode::Grassmannian
                                      ? orthonormalizers_[static_cast<std::size_t>(k)].backward(g)
                                      : powerNormalizers_[static_cast<std::size_t>(k)].backward(g);
      dV.col(k) = nn::phiInv(nn::widenPsiBackward(dWidened));
    }
    encoder_.backward(dV);
  }

  /// Inference: Xbar for one message. Does not touch training caches.
  [[nodiscard]] RealMatrix encode(Index message) const {
    if (message < 0 || message >= cfg_.m) throw InvalidArgument("encode: message out of range");
    RealMatrix onehot = RealMatrix::Zero(cfg_.m, 1);
    onehot(message, 0) = 1.0;
    const RealMatrix v = encoder_.apply(onehot);
    const RealMatrix widened = nn::widenPsi(nn::reshapePhi(v.col(0), cfg_.t, cfg_.nt));
    if (cfg_.mode == TrainMode::Grassmannian) return widened * psdInvSqrt(widened.transpose() * widened);
    return std::sqrt(2.0 * cfg_.nt) * widened / widened.norm();
  }

  /// Ybar (2T x 2Nr) -> decoder input u (2 T Nr).
  [[nodiscard]] static RealVector receiverInput(const RealMatrix& ybar) { return nn::phiInv(nn::psiInv(ybar)); }

  [[nodiscard]] RealMatrix decodeProbabilities(const RealMatrix& u) const { return nn::softmax(decoder_.apply(u)); }

  struct BatchLoss {
    double loss = 0.0;
    std::size_t clamped = 0;
  };

  /// Summed cross entropy for fixed messages and channel draws (no gradients).
  [[nodiscard]] BatchLoss loss(const std::vector<Index>& messages, const std::vector<ChannelDraw>& draws,
                               double scale) const {
    std::vector<RealMatrix> codewords;
    for (Index k = 0; k < cfg_.m; ++k) codewords.push_back(encode(k));
    const RealMatrix u = decoderInputs(codewords, messages, draws, scale);
    const auto ce = nn::crossEntropyLoss(decodeProbabilities(u), messages);
    return {ce.loss, ce.clamped};
  }

  /// Zeroes gradients, runs the full forward pass and accumulates parameter
  /// gradients of the summed cross entropy. Throws NearSingularError if an
  /// encoder Gram matrix is singular.
  BatchLoss lossAndGradient(const std::vector<Index>& messages, const std::vector<ChannelDraw>& draws,
                            double scale) {
    zeroGrad();
    const std::vector<RealMatrix> codewords = encodeAllForward();
    const RealMatrix u = decoderInputs(codewords, messages, draws, scale);
    const RealMatrix probs = nn::softmax(decoder_.forward(u));
    const auto ce = nn::crossEntropyLoss(probs, messages);
    const RealMatrix dU = decoder_.backward(nn::softmaxCrossEntropyGrad(probs, messages));

    std::vector<RealMatrix> dXbar(static_cast<std::size_t>(cfg_.m), RealMatrix::Zero(2 * cfg_.t, 2 * cfg_.nt));
    for (std::size_t s = 0; s < messages.size(); ++s) {
      const RealMatrix dYtilde = nn::reshapePhi(dU.col(static_cast<Index>(s)), cfg_.t, cfg_.nr);
      dXbar[static_cast<std::size_t>(messages[s])] += channelLayerBackward(nn::psiInvBackward(dYtilde), draws[s]);
    }
    encodeAllBackward(dXbar);
    return {ce.loss, ce.clamped};
  }

 private:
  [[nodiscard]] RealMatrix decoderInputs(const std::vector<RealMatrix>& codewords, const std::vector<Index>& messages,
                                         const std::vector<ChannelDraw>& draws, double scale) const {
    if (messages.size() != draws.size()) throw InvalidArgument("autoencoder: one channel draw per message required");
    RealMatrix u(2 * cfg_.t * cfg_.nr, static_cast<Index>(messages.size()));
    for (std::size_t s = 0; s < messages.size(); ++s) {
      const Index msg = messages[s];
      if (msg < 0 || msg >= cfg_.m) throw InvalidArgument("autoencoder: message out of range");
      u.col(static_cast<Index>(s)) =
          receiverInput(channelLayerForward(codewords[static_cast<std::size_t>(msg)], draws[s], scale));
    }
    return u;
  }

  TrainConfig cfg_;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  std::vector<nn::Orthonormalizer> orthonormalizers_;
  std::vector<nn::PowerNormalizer> powerNormalizers_;
};

// ---------------------------------------------------------------------------
// Codebook extraction
// ---------------------------------------------------------------------------

inline std::string defaultProvenance(const TrainConfig& cfg) {
  if (cfg.mode == TrainMode::AblationNonunitary) return "ablation-nonunitary";
  return cfg.channelModel == ChannelModel::IidRayleigh ? "ae-rayleigh" : "ae-correlated";
}

/// Feeds every one-hot message through the frozen encoder. Throws
/// CodebookCollapseError if two codewords coincide (distance <= 1e-6).
inline Codebook extractCodebook(const Autoencoder& model) {
  const TrainConfig& cfg = model.config();
  std::vector<ComplexMatrix> codewords;
  codewords.reserve(static_cast<std::size_t>(cfg.m));
  for (Index k = 0; k < cfg.m; ++k) {
    // Normalized outputs are structured up to roundoff; project before unembedding.
    codewords.push_back(unembed(StructuredRealMatrix::project(model.encode(k))));
  }
  const bool grassmannian =
      cfg.mode == TrainMode::Grassmannian && validateUnitary(codewords, kUnitarityTolerance).pass;
  for (std::size_t i = 0; i < codewords.size(); ++i)
    for (std::size_t j = i + 1; j < codewords.size(); ++j) {
      const double d = grassmannian ? chordalDistanceUnchecked(codewords[i], codewords[j])
                                    : (codewords[i] - codewords[j]).norm();
      if (!(d > kCollapseThreshold))
        throw CodebookCollapseError("codewords " + std::to_string(i) + " and " + std::to_string(j) +
                                    " collapsed (distance " + std::to_string(d) + ")");
    }
  return Codebook(cfg.t, cfg.nt, std::move(codewords), defaultProvenance(cfg), grassmannian);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainReport {
  std::vector<double> epochMeanLoss;  // mean over the epoch's batches of the summed batch loss
  double initialBatchLoss = 0.0;      // loss of the first batch, before any update
  std::size_t skippedSteps = 0;       // batches skipped on a near-singular Gram matrix
  std::size_t clampedSamples = 0;     // samples whose log argument hit the clamp
  double maxUnitarityResidual = 0.0;  // max ||Xbar^T Xbar - I||_F over sampled encoder outputs
  double wallSeconds = 0.0;
  TrainConfig config;
};

inline nlohmann::json toJson(const TrainReport& r, const nn::AdamOptions& adam = {}) {
  return {{"epoch_mean_loss", r.epochMeanLoss},
          {"initial_batch_loss", r.initialBatchLoss},
          {"skipped_steps", r.skippedSteps},
          {"clamped_samples", r.clampedSamples},
          {"max_unitarity_residual", r.maxUnitarityResidual},
          {"wall_seconds", r.wallSeconds},
          {"loss_reduction", "sum over batch samples"},
          {"batches_interpretation", "batches_per_epoch batches in each of the epochs"},
          {"channel_resampling", "fresh channel and noise per sample"},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
          {"config", toJson(r.config)}};
}

struct TrainResult {
  TrainReport report;
  Codebook codebook;
};

/// Optional progress hook: (epoch, mean loss of that epoch).
using EpochCallback = std::function<void(int, double)>;

/// Runs epochs x batchesPerEpoch Adam steps on the summed cross entropy.
/// Deterministic given cfg.seed. The trained model is left in `model`.
inline TrainReport train(Autoencoder& model, const EpochCallback& onEpoch = {}) {
  const TrainConfig& cfg = model.config();
  const auto start = std::chrono::steady_clock::now();
  nn::Adam adam(model.parameters(), nn::AdamOptions{cfg.learningRate});
  const FadingChannel channel(cfg.channel());
  const double scale = noiseScale(cfg.nt, cfg.t, cfg.trainSnrDb);
  const RngStream root(cfg.seed, kTrainStream);

  TrainReport report;
  report.config = cfg;
  std::vector<Index> messages(static_cast<std::size_t>(cfg.batchSize));
  std::vector<ChannelDraw> draws(static_cast<std::size_t>(cfg.batchSize));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epochSum = 0.0;
    int epochBatches = 0;
    for (int b = 0; b < cfg.batchesPerEpoch; ++b) {
      RngStream rng = root.derive(static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(cfg.batchesPerEpoch) +
                                  static_cast<std::uint64_t>(b));
      for (std::size_t s = 0; s < messages.size(); ++s) {
        messages[s] = cfg.cycleMessages ? static_cast<Index>(s % static_cast<std::size_t>(cfg.m))
                                        : static_cast<Index>(rng.uniformIndex(static_cast<std::uint64_t>(cfg.m)));
        draws[s] = drawChannel(channel, rng);
      }
      Autoencoder::BatchLoss batch;
      try {
        batch = model.lossAndGradient(messages, draws, scale);
      } catch (const NearSingularError&) {
        ++report.skippedSteps;
        continue;
      }
      if (!std::isfinite(batch.loss))
        throw TrainingDivergedError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(b));
      if (epoch == 0 && epochBatches == 0) report.initialBatchLoss = batch.loss;
      report.clampedSamples += batch.clamped;
      adam.step();
      epochSum += batch.loss;
      ++epochBatches;

      if (cfg.mode == TrainMode::Grassmannian) {
        const Index probe = static_cast<Index>(rng.uniformIndex(static_cast<std::uint64_t>(cfg.m)));
        try {
          report.maxUnitarityResidual = std::max(report.maxUnitarityResidual, orthonormalityResidual(model.encode(probe)));
        } catch (const NearSingularError&) {
          // The next batch will hit the same Gram matrix and be skipped.
        }
      }
    }
    if (epochBatches == 0)
      throw TrainingDivergedError("training stalled: every batch of epoch " + std::to_string(epoch) +
                                  " hit a near-singular Gram matrix");
    const double mean = epochSum / epochBatches;
    report.epochMeanLoss.push_back(mean);
    if (onEpoch) onEpoch(epoch, mean);
  }
  report.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Builds, trains and extracts in one call.
inline TrainResult trainAndExtract(const TrainConfig& cfg, const EpochCallback& onEpoch = {}) {
  Autoencoder model(cfg);
  TrainReport report = train(model, onEpoch);
  return {std::move(report), extractCodebook(model)};
}

}  // namespace ncgrass
