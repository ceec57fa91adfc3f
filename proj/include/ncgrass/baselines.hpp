#pragma once

// Classical Grassmannian codebook generators used as comparison baselines.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "ncgrass/channel.hpp"
#include "ncgrass/constellation.hpp"
#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass {

struct PackingConfig {
  int m = 256;
  int t = 4;
  int nt = 2;
  int candidatePoolSize = 100000;
  int lloydIterations = 30;
  int lloydSampleCount = 12800;
  std::uint64_t seed = 1;

  void validate() const {
    if (m < 2) throw ConfigError("pack: m must be at least 2");
    if (t < 1 || nt < 1 || nt > t) throw ConfigError("pack: need 1 <= nt <= t");
    if (candidatePoolSize < m) throw ConfigError("pack: candidate_pool_size must be at least m");
    if (lloydIterations < 0) throw ConfigError("pack: lloyd_iterations must be non-negative");
    if (lloydSampleCount < 10 * m) throw ConfigError("pack: lloyd_sample_count must be at least 10*m");
  }
};

inline nlohmann::json toJson(const PackingConfig& c) {
  return {{"m", c.m},
          {"t", c.t},
          {"nt", c.nt},
          {"candidate_pool_size", c.candidatePoolSize},
          {"lloyd_iterations", c.lloydIterations},
          {"lloyd_sample_count", c.lloydSampleCount},
          {"seed", c.seed}};
}

inline PackingConfig packingConfigFromJson(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("pack config must be a JSON object");
    PackingConfig c;
    c.m = j.value("m", c.m);
    c.t = j.value("t", c.t);
    c.nt = j.value("nt", c.nt);
    c.candidatePoolSize = j.value("candidate_pool_size", c.candidatePoolSize);
    c.lloydIterations = j.value("lloyd_iterations", c.lloydIterations);
    c.lloydSampleCount = j.value("lloyd_sample_count", std::max(c.lloydSampleCount, 50 * c.m));
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pack config: ") + e.what());
  }
}

/// Isotropically distributed T x Nt matrix with orthonormal columns: the polar
/// factor of a complex Gaussian matrix.
inline ComplexMatrix randomUnitary(Index t, Index nt, RngStream& rng) {
  if (nt < 1 || nt > t) throw InvalidArgument("randomUnitary: need 1 <= Nt <= T");
  return orthonormalizeColumns(sampleComplexGaussian(t, nt, rng));
}

inline Codebook randomCodebook(const PackingConfig& cfg, RngStream& rng) {
  std::vector<ComplexMatrix> words;
  for (int k = 0; k < cfg.m; ++k) words.push_back(randomUnitary(cfg.t, cfg.nt, rng));
  return Codebook(cfg.t, cfg.nt, std::move(words), "random", true);
}

struct GreedyResult {
  Codebook codebook;
  double minDistance;
  std::vector<Index> poolIndices;  // selected candidates, in selection order
};

/// Max-min greedy selection from a fixed candidate pool.
///
/// Starts from the first candidate and repeatedly adds the candidate whose
/// minimum distance to the selected set is largest (ties: lowest index).
inline GreedyResult greedyPackFromPool(const std::vector<ComplexMatrix>& pool, Index m, Index t, Index nt) {
  if (static_cast<Index>(pool.size()) < m) throw InvalidArgument("greedyPack: pool smaller than M");
  std::vector<double> minDist(pool.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> selected(pool.size(), false);
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(m));
  double achieved = std::numeric_limits<double>::infinity();

  Index next = 0;
  for (Index k = 0; k < m; ++k) {
    chosen.push_back(next);
    selected[static_cast<std::size_t>(next)] = true;
    if (k > 0) achieved = std::min(achieved, minDist[static_cast<std::size_t>(next)]);
    const ComplexMatrix& added = pool[static_cast<std::size_t>(next)];
    double best = -1.0;
    Index bestIndex = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (selected[i]) continue;
      minDist[i] = std::min(minDist[i], chordalDistanceUnchecked(pool[i], added));
      if (minDist[i] > best) {
        best = minDist[i];
        bestIndex = static_cast<Index>(i);
      }
    }
    next = bestIndex;
  }
  std::vector<ComplexMatrix> words;
  for (Index i : chosen) words.push_back(pool[static_cast<std::size_t>(i)]);
  return {Codebook(t, nt, std::move(words), "greedy", true), achieved, std::move(chosen)};
}

inline std::vector<ComplexMatrix> randomUnitaryPool(Index count, Index t, Index nt, RngStream& rng) {
  std::vector<ComplexMatrix> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) pool.push_back(randomUnitary(t, nt, rng));
  return pool;
}

inline GreedyResult greedyPack(const PackingConfig& cfg, RngStream& rng) {
  cfg.validate();
  return greedyPackFromPool(randomUnitaryPool(cfg.candidatePoolSize, cfg.t, cfg.nt, rng), cfg.m, cfg.t, cfg.nt);
}

struct LloydResult {
  std::vector<ComplexMatrix> codewords;
  std::vector<double> meanDistanceHistory;  // after each round
  std::size_t reseededClusters = 0;
  std::size_t meanDistanceDrops = 0;  // rounds where the mean distance fell by more than 1e-6
};

/// Lloyd rounds over a fixed training set of unitary samples.
///
/// Each round assigns every sample to its nearest codeword (chordal Frobenius
/// distance) and replaces each codeword with the dominant Nt-dimensional
/// eigenspace of its cluster's projector sum sum X X^H. The new basis is
/// rotated to the one closest to the previous codeword, so a codeword whose
/// subspace does not move keeps its matrix. Empty clusters are reseeded from a
/// random sample.
inline LloydResult lloydRefine(std::vector<ComplexMatrix> codewords, const std::vector<ComplexMatrix>& samples,
                               int iterations, RngStream& rng) {
  if (codewords.empty() || samples.empty()) throw InvalidArgument("lloyd: empty codebook or sample set");
  const Index t = codewords.front().rows();
  const Index nt = codewords.front().cols();
  LloydResult out;
  double previousMean = meanPairwiseDistance(codewords);
  std::vector<std::size_t> assignment(samples.size());

  for (int round = 0; round < iterations; ++round) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t bestIndex = 0;
      for (std::size_t k = 0; k < codewords.size(); ++k) {
        const double d = chordalDistanceUnchecked(samples[s], codewords[k]);
        if (d < best) {
          best = d;
          bestIndex = k;
        }
      }
      assignment[s] = bestIndex;
    }
    std::vector<ComplexMatrix> projectorSums(codewords.size(), ComplexMatrix::Zero(t, t));
    std::vector<std::size_t> counts(codewords.size(), 0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      projectorSums[assignment[s]] += samples[s] * samples[s].adjoint();
      ++counts[assignment[s]];
    }
    for (std::size_t k = 0; k < codewords.size(); ++k) {
      if (counts[k] == 0) {
        codewords[k] = samples[rng.uniformIndex(samples.size())];
        ++out.reseededClusters;
        continue;
      }
      const ComplexMatrix basis = hermitianDominantSubspace(projectorSums[k], nt);
      // Procrustes alignment: basis * polar(basis^H X_old).
      const ComplexMatrix cross = basis.adjoint() * codewords[k];
      try {
        codewords[k] = orthonormalizeColumns(basis * orthonormalizeColumns(cross));
      } catch (const NearSingularError&) {
        codewords[k] = basis;  // new subspace has a direction orthogonal to the old one
      }
    }
    const double mean = meanPairwiseDistance(codewords);
    if (mean < previousMean - 1e-6) ++out.meanDistanceDrops;
    out.meanDistanceHistory.push_back(mean);
    previousMean = mean;
  }
  out.codewords = std::move(codewords);
  return out;
}

struct LloydPackResult {
  Codebook codebook;
  LloydResult details;
};

inline LloydPackResult lloydPack(const PackingConfig& cfg, RngStream& rng) {
  cfg.validate();
  RngStream initRng = rng.derive(1);
  RngStream sampleRng = rng.derive(2);
  RngStream reseedRng = rng.derive(3);
  auto initial = randomUnitaryPool(cfg.m, cfg.t, cfg.nt, initRng);
  const auto samples = randomUnitaryPool(cfg.lloydSampleCount, cfg.t, cfg.nt, sampleRng);
  LloydResult details = lloydRefine(std::move(initial), samples, cfg.lloydIterations, reseedRng);
  Codebook cb(cfg.t, cfg.nt, details.codewords, "lloyd", true);
  return {std::move(cb), std::move(details)};
}

}  // namespace ncgrass
