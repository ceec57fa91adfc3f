#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass {

enum class ChannelModel { IidRayleigh, ReceiveCorrelated };

inline std::string toString(ChannelModel model) {
  return model == ChannelModel::IidRayleigh ? "iid-rayleigh" : "receive-correlated";
}

inline ChannelModel channelModelFromString(const std::string& s) {
  if (s == "iid-rayleigh") return ChannelModel::IidRayleigh;
  if (s == "receive-correlated") return ChannelModel::ReceiveCorrelated;
  throw ConfigError("unknown channel model '" + s + "' (expected iid-rayleigh or receive-correlated)");
}

struct ChannelConfig {
  int nt = 2;
  int nr = 2;
  int t = 4;
  ChannelModel model = ChannelModel::IidRayleigh;
  double r = 0.0;  // receive correlation coefficient, used by ReceiveCorrelated only
  double snrDb = 15.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (nt < 1 || nr < 1 || t < 1) throw ConfigError("channel: nt, nr and t must be positive");
    if (nt > t) throw ConfigError("channel: nt must not exceed the coherence interval t");
    if (!(r >= 0.0 && r < 1.0))
      throw ConfigError("channel: exponential correlation coefficient r=" + std::to_string(r) +
                        " must lie in [0, 1)");
    if (std::isnan(snrDb)) throw ConfigError("channel: snr_db must be a number");
  }

  /// True when nt = min(floor(t/2), nr), the antenna relation of the reference setup.
  [[nodiscard]] bool matchesReferenceAntennaRule() const { return nt == std::min(t / 2, nr); }
};

inline nlohmann::json toJson(const ChannelConfig& c) {
  return {{"model", toString(c.model)}, {"r", c.r},           {"nt", c.nt},     {"nr", c.nr},
          {"t", c.t},                   {"snr_db", c.snrDb}, {"seed", c.seed}};
}

/// Missing keys keep the values of `defaults`.
inline ChannelConfig channelConfigFromJson(const nlohmann::json& j, ChannelConfig defaults = {}) {
  try {
    if (!j.is_object()) throw ConfigError("channel config must be a JSON object");
    ChannelConfig c = defaults;
    if (j.contains("model")) c.model = channelModelFromString(j.at("model").get<std::string>());
    c.r = j.value("r", c.r);
    c.nt = j.value("nt", c.nt);
    c.nr = j.value("nr", c.nr);
    c.t = j.value("t", c.t);
    c.snrDb = j.value("snr_db", c.snrDb);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("channel config: ") + e.what());
  }
}

/// Exponential receive covariance, entry (i, j) = r^|i-j|.
inline RealMatrix receiveCovariance(double r, int nr) {
  if (!(r >= 0.0 && r < 1.0)) throw InvalidArgument("receiveCovariance: r must lie in [0, 1)");
  if (nr < 1) throw InvalidArgument("receiveCovariance: nr must be positive");
  RealMatrix cov(nr, nr);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nr; ++j) cov(i, j) = std::pow(r, std::abs(i - j));
  return cov;
}

/// sqrt(Nt / (rho T)) with rho = 10^(snrDb/10); zero in the noiseless limit snrDb = +inf.
inline double noiseScale(int nt, int t, double snrDb) {
  if (snrDb == std::numeric_limits<double>::infinity()) return 0.0;
  const double rho = std::pow(10.0, snrDb / 10.0);
  return std::sqrt(static_cast<double>(nt) / (rho * static_cast<double>(t)));
}

/// Matrix of i.i.d. CN(0,1) entries, drawn in column-major order.
inline ComplexMatrix sampleComplexGaussian(Index rows, Index cols, RngStream& rng) {
  ComplexMatrix g(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) g(r, c) = rng.complexNormal();
  return g;
}

/// Block-fading channel H = G (R^r)^{1/2} (transmit covariance is the identity).
///
/// The symmetric square root of the receive covariance is computed once at
/// construction; sampling is then allocation-light and reentrant.
class FadingChannel {
 public:
  explicit FadingChannel(const ChannelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.model == ChannelModel::ReceiveCorrelated) {
      rxSqrt_ = ComplexMatrix(psdSqrt(receiveCovariance(cfg_.r, cfg_.nr)).cast<Complex>());
      correlated_ = true;
    }
  }

  [[nodiscard]] const ChannelConfig& config() const noexcept { return cfg_; }

  ComplexMatrix sample(RngStream& rng) const {
    ComplexMatrix g = sampleComplexGaussian(cfg_.nt, cfg_.nr, rng);
    if (!correlated_) return g;
    return g * rxSqrt_;
  }

  /// Y = X H + scale * W with scale = sqrt(Nt / (rho T)).
  ComplexMatrix transmit(const ComplexMatrix& x, const ComplexMatrix& h, double snrDb, RngStream& rng) const {
    if (x.cols() != h.rows() || x.rows() != cfg_.t || h.cols() != cfg_.nr)
      throw InvalidArgument("transmit: dimension mismatch");
    const double scale = noiseScale(cfg_.nt, cfg_.t, snrDb);
    ComplexMatrix y = x * h;
    if (scale == 0.0) return y;
    return y + scale * sampleComplexGaussian(x.rows(), h.cols(), rng);
  }

 private:
  ChannelConfig cfg_;
  ComplexMatrix rxSqrt_;
  bool correlated_ = false;
};

inline ComplexMatrix sampleChannel(const ChannelConfig& cfg, RngStream& rng) { return FadingChannel(cfg).sample(rng); }

inline ComplexMatrix transmit(const ComplexMatrix& x, const ComplexMatrix& h, const ChannelConfig& cfg,
                              RngStream& rng) {
  return FadingChannel(cfg).transmit(x, h, cfg.snrDb, rng);
}

}  // namespace ncgrass
