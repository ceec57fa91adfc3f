#pragma once

// Monte Carlo symbol error rate measurement and curve analytics.
//
// Trials are grouped in fixed-size chunks; chunk k of an SNR point draws from
// its own sub-stream, so results do not depend on the number of workers. The
// stopping rule is applied at single-trial resolution by recording where the
// errors fall inside each chunk.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncgrass/channel.hpp"
#include "ncgrass/constellation.hpp"
#include "ncgrass/detector.hpp"
#include "ncgrass/error.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass {

struct StoppingRule {
  std::int64_t minErrors = 100;
  std::int64_t maxTrials = 10'000'000;
};

struct SerPoint {
  double snrDb = 0.0;
  std::int64_t trials = 0;
  std::int64_t errors = 0;
  double ser = 0.0;
  double halfWidth95 = 0.0;
  double ciLower = 0.0;
  double ciUpper = 0.0;
  bool wilson = false;  // interval from the Wilson score formula (errors < 30)
};

struct SerCurve {
  std::string provenance;
  ChannelConfig channel;
  StoppingRule stop;
  bool mismatchedDetector = false;
  std::vector<SerPoint> points;
};

inline constexpr double kZ95 = 1.959963984540054;

/// 95% interval for a binomial proportion: normal approximation, or the Wilson
/// score interval when fewer than 30 errors were observed.
inline void fillConfidenceInterval(SerPoint& p) {
  const double n = static_cast<double>(p.trials);
  p.ser = p.trials > 0 ? static_cast<double>(p.errors) / n : 0.0;
  if (p.trials == 0) {
    p.halfWidth95 = 0.5;
    p.ciLower = 0.0;
    p.ciUpper = 1.0;
    return;
  }
  const double z2 = kZ95 * kZ95;
  if (p.errors < 30) {
    p.wilson = true;
    const double denom = 1.0 + z2 / n;
    const double center = (p.ser + z2 / (2.0 * n)) / denom;
    p.halfWidth95 = kZ95 / denom * std::sqrt(p.ser * (1.0 - p.ser) / n + z2 / (4.0 * n * n));
    p.ciLower = std::max(0.0, center - p.halfWidth95);
    p.ciUpper = std::min(1.0, center + p.halfWidth95);
  } else {
    p.wilson = false;
    p.halfWidth95 = kZ95 * std::sqrt(p.ser * (1.0 - p.ser) / n);
    p.ciLower = std::max(0.0, p.ser - p.halfWidth95);
    p.ciUpper = std::min(1.0, p.ser + p.halfWidth95);
  }
}

inline bool intervalsOverlap(const SerPoint& a, const SerPoint& b) {
  return a.ciLower <= b.ciUpper && b.ciLower <= a.ciUpper;
}

/// a is below b with non-overlapping 95% intervals.
inline bool separatedBelow(const SerPoint& a, const SerPoint& b) { return a.ciUpper < b.ciLower; }

namespace detail {

inline constexpr std::int64_t kChunkTrials = 4096;

struct ChunkOutcome {
  std::int64_t trials = 0;
  std::vector<std::int32_t> errorPositions;  // trial offsets within the chunk
};

inline ChunkOutcome runChunk(const Codebook& cb, const MlDetector& detector, const FadingChannel& channel,
                             double snrDb, RngStream rng, std::int64_t trials) {
  const Index t = cb.T(), nt = cb.Nt();
  const Index nr = channel.config().nr;
  const double scale = noiseScale(static_cast<int>(nt), static_cast<int>(t), snrDb);
  const auto m = static_cast<std::uint64_t>(cb.size());
  ChunkOutcome out;
  out.trials = trials;
  ComplexMatrix y(t, nr);
  for (std::int64_t i = 0; i < trials; ++i) {
    const auto sent = static_cast<Index>(rng.uniformIndex(m));
    const ComplexMatrix h = channel.sample(rng);
    y.noalias() = cb[sent] * h;
    if (scale != 0.0)
      for (Index c = 0; c < nr; ++c)
        for (Index r = 0; r < t; ++r) y(r, c) += scale * rng.complexNormal();
    if (detector.detectIndex(y.data(), nr) != sent) out.errorPositions.push_back(static_cast<std::int32_t>(i));
  }
  return out;
}

}  // namespace detail

/// SER at one SNR. Repeats {draw message, draw H, transmit, detect} until
/// minErrors errors or maxTrials trials. Results are independent of `workers`.
inline SerPoint measureSer(const Codebook& cb, const ChannelConfig& channelCfg, double snrDb, StoppingRule stop,
                           const RngStream& rng, int workers = 1) {
  if (channelCfg.t != cb.T() || channelCfg.nt != cb.Nt())
    throw InvalidArgument("measureSer: channel t/nt do not match the codebook");
  if (stop.maxTrials < 1 || stop.minErrors < 1) throw InvalidArgument("measureSer: stopping rule must be positive");
  const FadingChannel channel(channelCfg);
  const MlDetector detector(cb);
  workers = std::max(1, workers);

  SerPoint point;
  point.snrDb = snrDb;
  std::int64_t chunk = 0;
  bool done = false;
  while (!done) {
    const std::int64_t remaining = stop.maxTrials - point.trials;
    const std::int64_t wave = std::min<std::int64_t>(workers, (remaining + detail::kChunkTrials - 1) / detail::kChunkTrials);
    std::vector<detail::ChunkOutcome> outcomes(static_cast<std::size_t>(wave));
    auto runOne = [&](std::int64_t w) {
      const std::int64_t start = point.trials + w * detail::kChunkTrials;
      const std::int64_t n = std::min(detail::kChunkTrials, stop.maxTrials - start);
      outcomes[static_cast<std::size_t>(w)] =
          detail::runChunk(cb, detector, channel, snrDb, rng.derive(static_cast<std::uint64_t>(chunk + w)), n);
    };
    if (wave == 1) {
      runOne(0);
    } else {
      std::vector<std::thread> threads;
      for (std::int64_t w = 0; w < wave; ++w) threads.emplace_back(runOne, w);
      for (auto& th : threads) th.join();
    }
    for (const auto& o : outcomes) {
      const std::int64_t needed = stop.minErrors - point.errors;
      if (static_cast<std::int64_t>(o.errorPositions.size()) >= needed) {
        point.trials += o.errorPositions[static_cast<std::size_t>(needed - 1)] + 1;
        point.errors += needed;
        done = true;
        break;
      }
      point.trials += o.trials;
      point.errors += static_cast<std::int64_t>(o.errorPositions.size());
    }
    chunk += wave;
    if (point.trials >= stop.maxTrials) done = true;
  }
  fillConfidenceInterval(point);
  return point;
}

/// Sweep over SNR values. Each point draws from a sub-stream keyed by its SNR
/// value, so any subset of a sweep reproduces the corresponding points.
inline SerCurve sweepSer(const Codebook& cb, const ChannelConfig& channelCfg, const std::vector<double>& snrList,
                         StoppingRule stop, const RngStream& rng, int workers = 1) {
  for (std::size_t i = 1; i < snrList.size(); ++i)
    if (!(snrList[i] > snrList[i - 1])) throw InvalidArgument("sweepSer: SNR list must be strictly increasing");
  SerCurve curve;
  curve.provenance = cb.provenance();
  curve.channel = channelCfg;
  curve.stop = stop;
  curve.mismatchedDetector = !cb.grassmannian();
  for (double snr : snrList)
    curve.points.push_back(measureSer(cb, channelCfg, snr, stop, rng.derive(streamIdFor(snr)), workers));
  return curve;
}

/// Least-squares slope of log10(SER) against SNR/10, negated, over points
/// with snrDb in [loDb, hiDb]. Zero-error points are skipped.
inline double diversitySlope(const SerCurve& curve, double loDb, double hiDb, std::size_t* skippedZeroPoints = nullptr) {
  std::vector<double> xs, ys;
  std::size_t skipped = 0;
  for (const auto& p : curve.points) {
    if (p.snrDb < loDb || p.snrDb > hiDb) continue;
    if (p.errors == 0 || p.ser <= 0.0) {
      ++skipped;
      continue;
    }
    xs.push_back(p.snrDb / 10.0);
    ys.push_back(std::log10(p.ser));
  }
  if (skippedZeroPoints) *skippedZeroPoints = skipped;
  if (xs.size() < 2) throw InvalidArgument("diversitySlope: need at least two points with errors in the window");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw InvalidArgument("diversitySlope: window points share one SNR");
  return -sxy / sxx;
}

/// Slope over the top `windowDb` of the sweep.
inline double diversitySlope(const SerCurve& curve, double windowDb = 6.0) {
  if (curve.points.empty()) throw InvalidArgument("diversitySlope: empty curve");
  const double hi = curve.points.back().snrDb;
  return diversitySlope(curve, hi - windowDb, hi);
}

/// True when SER does not increase with SNR beyond what the 95% intervals allow.
inline bool nonIncreasingWithinCi(const SerCurve& curve) {
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& prev = curve.points[i - 1];
    const auto& cur = curve.points[i];
    if (cur.ser > prev.ser && !intervalsOverlap(prev, cur)) return false;
  }
  return true;
}

/// SNR at which the curve crosses `targetSer`, by linear interpolation of
/// log10(SER) against SNR in dB. Empty if the curve does not bracket the target.
inline std::optional<double> snrAtSer(const SerCurve& curve, double targetSer) {
  const double target = std::log10(targetSer);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (a.ser <= 0.0 || b.ser <= 0.0) continue;
    const double la = std::log10(a.ser), lb = std::log10(b.ser);
    if ((la - target) * (lb - target) <= 0.0 && la != lb)
      return a.snrDb + (target - la) * (b.snrDb - a.snrDb) / (lb - la);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Output formats
// ---------------------------------------------------------------------------

inline void writeSerCsv(std::ostream& os, const SerCurve& curve) {
  std::ostringstream s;
  s.precision(17);
  s << "snr_db,trials,errors,ser,ci95\n";
  for (const auto& p : curve.points)
    s << p.snrDb << ',' << p.trials << ',' << p.errors << ',' << p.ser << ',' << p.halfWidth95 << '\n';
  os << s.str();
}

inline nlohmann::json toJson(const StoppingRule& s) {
  return {{"min_errors", s.minErrors}, {"max_trials", s.maxTrials}};
}

inline nlohmann::json toJson(const SerCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points)
    pts.push_back({{"snr_db", p.snrDb},
                   {"trials", p.trials},
                   {"errors", p.errors},
                   {"ser", p.ser},
                   {"ci95", p.halfWidth95},
                   {"ci_lower", p.ciLower},
                   {"ci_upper", p.ciUpper},
                   {"ci_method", p.wilson ? "wilson" : "normal"}});
  return {{"provenance", c.provenance},
          {"channel", toJson(c.channel)},
          {"stopping_rule", toJson(c.stop)},
          {"mismatched_detector", c.mismatchedDetector},
          {"points", pts}};
}

/// Curves plus pairwise SNR gaps (dB) at a target SER; gap = SNR(b) - SNR(a),
/// positive when curve a needs less SNR.
inline nlohmann::json comparisonReport(const std::vector<SerCurve>& curves, double targetSer) {
  nlohmann::json out = {{"target_ser", targetSer}, {"curves", nlohmann::json::array()}, {"gaps", nlohmann::json::array()}};
  std::vector<std::optional<double>> crossings;
  for (const auto& c : curves) {
    out["curves"].push_back(toJson(c));
    crossings.push_back(snrAtSer(c, targetSer));
  }
  for (std::size_t a = 0; a < curves.size(); ++a)
    for (std::size_t b = a + 1; b < curves.size(); ++b) {
      nlohmann::json gap = {{"a", curves[a].provenance}, {"b", curves[b].provenance}};
      if (crossings[a] && crossings[b])
        gap["gap_db"] = *crossings[b] - *crossings[a];
      else
        gap["gap_db"] = nullptr;
      out["gaps"].push_back(gap);
    }
  return out;
}

}  // namespace ncgrass
