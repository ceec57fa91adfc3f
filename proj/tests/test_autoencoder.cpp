#include "support.hpp"

using namespace ncgrass;
using namespace testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TrainConfig tinyConfig() {
  TrainConfig c;
  c.m = 4;
  c.encoderHidden = {8};
  c.decoderHidden = {8};
  c.batchSize = 6;
  c.epochs = 2;
  c.batchesPerEpoch = 3;
  c.seed = 5;
  return c;
}

std::vector<ChannelDraw> pinnedDraws(const TrainConfig& cfg, std::size_t n, RngStream& rng) {
  const FadingChannel ch(cfg.channel());
  std::vector<ChannelDraw> d;
  for (std::size_t i = 0; i < n; ++i) d.push_back(drawChannel(ch, rng));
  return d;
}

}  // namespace

TEST_CASE("train config JSON", "[autoencoder]") {
  TrainConfig c;
  c.channelModel = ChannelModel::ReceiveCorrelated;
  c.channelR = 0.9;
  c.mode = TrainMode::AblationNonunitary;
  const auto j = toJson(c);
  const TrainConfig back = trainConfigFromJson(j);
  CHECK(toJson(back) == j);
  CHECK(back.encoderWidths() == std::vector<Index>{16, 256, 256, 16});
  CHECK(back.decoderWidths() == std::vector<Index>{16, 256, 256, 16});

  auto bad = j;
  bad["channel"]["r"] = 1.2;
  CHECK_THROWS_AS(trainConfigFromJson(bad), ConfigError);
  bad = j;
  bad["mode"] = "orthogonal";
  CHECK_THROWS_AS(trainConfigFromJson(bad), ConfigError);
  bad = j;
  bad["batch_size"] = 0;
  CHECK_THROWS_AS(trainConfigFromJson(bad), ConfigError);
  bad = j;
  bad["channel"]["nt"] = 1;
  CHECK_THROWS_AS(trainConfigFromJson(bad), ConfigError);
}

TEST_CASE("channel layer agrees with the complex model", "[autoencoder]") {
  RngStream rng(71, 0);
  TrainConfig cfg;
  const FadingChannel ch(cfg.channel());
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix x = randomStiefel(4, 2, rng);
    const ChannelDraw d = drawChannel(ch, rng);
    const double scale = noiseScale(2, 4, 15.0);
    const RealMatrix y = channelLayerForward(embedDense(x), d, scale);
    const ComplexMatrix expected = x * d.h + scale * d.w;
    CHECK(structureResidual(y) <= 1e-12);
    CHECK((unembed(StructuredRealMatrix::project(y)) - expected).norm() <= 1e-12);

    const RealMatrix noiseless = channelLayerForward(embedDense(x), d, 0.0);
    CHECK(noiseless == embedDense(x) * embedDense(d.h));
    CHECK_THAT(noiseless.squaredNorm(), WithinRel(2.0 * (x * d.h).squaredNorm(), 1e-12));

    const RealMatrix c = randomReal(8, 4, rng);
    const RealMatrix xr = randomReal(8, 4, rng);
    const RealMatrix num =
        numericGradient([&](const RealMatrix& z) { return probe(c, channelLayerForward(z, d, scale)); }, xr);
    CHECK(relativeError(channelLayerBackward(c, d), num) <= 1e-8);
    CHECK(channelLayerBackward(c, d) == c * embedDense(d.h).transpose());
  }
}

TEST_CASE("encoder and decoder post-conditions", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  Autoencoder model(cfg);
  for (Index m = 0; m < cfg.m; ++m) {
    const RealMatrix x = model.encode(m);
    CHECK(orthonormalityResidual(x) <= 1e-8);
    CHECK(structureResidual(x) <= 1e-10);
  }
  RngStream rng(72, 0);
  const RealMatrix u = randomReal(2 * cfg.t * cfg.nr, 5, rng);
  const RealMatrix p = model.decodeProbabilities(u);
  CHECK(p.rows() == cfg.m);
  for (Index c = 0; c < 5; ++c) CHECK_THAT(p.col(c).sum(), WithinAbs(1.0, 1e-12));

  const auto all = model.encodeAllForward();
  for (Index m = 0; m < cfg.m; ++m) CHECK((all[static_cast<std::size_t>(m)] - model.encode(m)).norm() <= 1e-12);
}

TEST_CASE("end-to-end gradient matches finite differences", "[autoencoder]") {
  for (TrainMode mode : {TrainMode::Grassmannian, TrainMode::AblationNonunitary}) {
    TrainConfig cfg = tinyConfig();
    cfg.mode = mode;
    Autoencoder model(cfg);
    RngStream rng(73, static_cast<std::uint64_t>(mode));
    const std::vector<Index> messages{0, 1, 2, 3, 1, 2};
    const auto draws = pinnedDraws(cfg, messages.size(), rng);
    const double scale = noiseScale(cfg.nt, cfg.t, 10.0);
    model.lossAndGradient(messages, draws, scale);

    std::vector<nn::Tensor*> params = model.parameters();
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
      nn::Tensor& p = *params[rng.uniformIndex(params.size())];
      const auto idx = static_cast<Index>(rng.uniformIndex(static_cast<std::uint64_t>(p.size())));
      const double saved = p.value.data()[idx];
      const double h = 1e-5;
      p.value.data()[idx] = saved + h;
      const double up = model.loss(messages, draws, scale).loss;
      p.value.data()[idx] = saved - h;
      const double down = model.loss(messages, draws, scale).loss;
      p.value.data()[idx] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data()[idx];
      if (std::abs(numeric) < 1e-7 && std::abs(analytic) < 1e-7) continue;  // dead ReLU path
      CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(numeric), 1e-3));
      ++checked;
    }
    CHECK(checked >= 6);

    // Whole-matrix check on the encoder output layer, which every sample reaches.
    nn::Tensor& w = model.encoder().layers().back().weights();
    const RealMatrix analytic = w.grad;
    const RealMatrix w0 = w.value;
    const RealMatrix numeric = numericGradient(
        [&](const RealMatrix& z) {
          w.value = z;
          const double l = model.loss(messages, draws, scale).loss;
          w.value = w0;
          return l;
        },
        w0);
    CHECK(relativeError(analytic, numeric) <= 1e-4);
  }
}

TEST_CASE("training is deterministic and starts near the uniform loss", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  cfg.batchSize = 64;
  const TrainResult a = trainAndExtract(cfg);
  const TrainResult b = trainAndExtract(cfg);
  CHECK(a.report.epochMeanLoss == b.report.epochMeanLoss);
  CHECK(a.codebook == b.codebook);
  CHECK(a.report.epochMeanLoss.size() == static_cast<std::size_t>(cfg.epochs));
  for (double l : a.report.epochMeanLoss) CHECK(std::isfinite(l));
  const double uniform = cfg.batchSize * std::log(static_cast<double>(cfg.m));
  CHECK_THAT(a.report.initialBatchLoss, WithinRel(uniform, 0.2));
  CHECK(a.report.maxUnitarityResidual <= 1e-8);
  CHECK(a.report.skippedSteps == 0);

  cfg.seed = 6;
  CHECK(trainAndExtract(cfg).report.epochMeanLoss != a.report.epochMeanLoss);
}

TEST_CASE("codebook extraction", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  cfg.m = 8;
  cfg.batchSize = 32;
  const TrainResult r = trainAndExtract(cfg);
  const Codebook& cb = r.codebook;
  CHECK(cb.size() == 8);
  CHECK(cb.grassmannian());
  CHECK(cb.provenance() == "ae-rayleigh");
  CHECK(validateUnitary(cb, 1e-6).pass);

  // Noiseless round trip through the detector returns every message.
  RngStream rng(74, 0);
  for (Index m = 0; m < cb.size(); ++m) {
    const ComplexMatrix y = cb[m] * sampleComplexGaussian(2, 2, rng);
    CHECK(detect(y, cb).index == m);
  }

  cfg.channelModel = ChannelModel::ReceiveCorrelated;
  cfg.channelR = 0.9;
  CHECK(trainAndExtract(cfg).codebook.provenance() == "ae-correlated");
}

TEST_CASE("ablation produces non-unitary codewords", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  cfg.mode = TrainMode::AblationNonunitary;
  cfg.batchSize = 32;
  const TrainResult r = trainAndExtract(cfg);
  CHECK_FALSE(r.codebook.grassmannian());
  CHECK(r.codebook.provenance() == "ablation-nonunitary");
  CHECK(validateUnitary(r.codebook, 1e-6).maxResidual > 0.1);
  for (const auto& x : r.codebook.codewords()) CHECK_THAT(x.norm(), WithinAbs(std::sqrt(2.0), 1e-12));
}

TEST_CASE("degenerate encoder stalls training", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  Autoencoder model(cfg);
  auto& out = model.encoder().layers().back();
  out.weights().value.setZero();
  out.biases().value.setZero();
  CHECK_THROWS_AS(train(model), TrainingDivergedError);
  CHECK_THROWS_AS(model.encode(0), NearSingularError);
}

TEST_CASE("collapsed encoder fails extraction", "[autoencoder]") {
  TrainConfig cfg = tinyConfig();
  Autoencoder model(cfg);
  // Constant encoder output: every message maps to the same codeword.
  auto& out = model.encoder().layers().back();
  out.weights().value.setZero();
  RngStream rng(75, 0);
  out.biases().value = randomReal(out.outDim(), 1, rng);
  CHECK_THROWS_AS(extractCodebook(model), CodebookCollapseError);
}
