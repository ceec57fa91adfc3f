#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ncgrass/error.hpp"
#include "ncgrass/matrix.hpp"

namespace ncgrass {

inline constexpr double kUnitarityTolerance = 1e-6;
inline constexpr double kCollapseThreshold = 1e-6;

// ---------------------------------------------------------------------------
// Chordal Frobenius distance
// ---------------------------------------------------------------------------

/// d = sqrt(2 Nt - 2 sum_i sigma_i(X1^H X2)) without validating unitarity.
/// Used in inner loops where codewords are already known to be unitary.
inline double chordalDistanceUnchecked(const ComplexMatrix& x1, const ComplexMatrix& x2) {
  const Index nt = x1.cols();
  const Index t = x1.rows();
  double nuclear;
  if (nt == 1) {
    Complex acc{};
    for (Index i = 0; i < t; ++i) acc += std::conj(x1(i, 0)) * x2(i, 0);
    nuclear = std::abs(acc);
  } else if (nt == 2) {
    Complex g00{}, g01{}, g10{}, g11{};
    for (Index i = 0; i < t; ++i) {
      const Complex a0 = std::conj(x1(i, 0)), a1 = std::conj(x1(i, 1));
      const Complex b0 = x2(i, 0), b1 = x2(i, 1);
      g00 += a0 * b0;
      g01 += a0 * b1;
      g10 += a1 * b0;
      g11 += a1 * b1;
    }
    const double fro2 = std::norm(g00) + std::norm(g01) + std::norm(g10) + std::norm(g11);
    nuclear = std::sqrt(fro2 + 2.0 * std::abs(g00 * g11 - g01 * g10));
  } else {
    nuclear = nuclearNorm(x1.adjoint() * x2);
  }
  const double radicand = 2.0 * static_cast<double>(nt) - 2.0 * nuclear;
  return std::sqrt(std::clamp(radicand, 0.0, 2.0 * static_cast<double>(nt)));
}

/// Chordal Frobenius distance between two T x Nt matrices with orthonormal columns.
inline double chordalFrobeniusDistance(const ComplexMatrix& x1, const ComplexMatrix& x2) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols())
    throw InvalidArgument("chordalFrobeniusDistance: shape mismatch");
  requireFinite(x1, "chordalFrobeniusDistance");
  requireFinite(x2, "chordalFrobeniusDistance");
  if (unitarityResidual(x1) > kUnitarityTolerance || unitarityResidual(x2) > kUnitarityTolerance)
    throw InvalidArgument("chordalFrobeniusDistance: input is not unitary within 1e-6");
  return chordalDistanceUnchecked(x1, x2);
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// Ordered list of M codewords, each T x Nt. Message m is transmitted as codewords()[m].
///
/// Construction validates the invariants: M >= 2, consistent finite shapes,
/// distinct codewords, and unitarity within 1e-6 when the codebook claims to
/// be Grassmannian.
class Codebook {
 public:
  Codebook(Index t, Index nt, std::vector<ComplexMatrix> codewords, std::string provenance, bool grassmannian)
      : t_(t), nt_(nt), codewords_(std::move(codewords)), provenance_(std::move(provenance)),
        grassmannian_(grassmannian) {
    validate();
  }

  [[nodiscard]] Index T() const noexcept { return t_; }
  [[nodiscard]] Index Nt() const noexcept { return nt_; }
  [[nodiscard]] Index size() const noexcept { return static_cast<Index>(codewords_.size()); }
  [[nodiscard]] const std::vector<ComplexMatrix>& codewords() const noexcept { return codewords_; }
  [[nodiscard]] const ComplexMatrix& operator[](Index m) const { return codewords_[static_cast<std::size_t>(m)]; }
  [[nodiscard]] const std::string& provenance() const noexcept { return provenance_; }
  [[nodiscard]] bool grassmannian() const noexcept { return grassmannian_; }

  bool operator==(const Codebook& other) const {
    return t_ == other.t_ && nt_ == other.nt_ && provenance_ == other.provenance_ &&
           grassmannian_ == other.grassmannian_ && codewords_ == other.codewords_;
  }

 private:
  void validate() const {
    if (t_ < 1 || nt_ < 1 || nt_ > t_) throw InvalidArgument("Codebook: need 1 <= Nt <= T");
    if (codewords_.size() < 2) throw InvalidArgument("Codebook: need at least two codewords");
    for (std::size_t m = 0; m < codewords_.size(); ++m) {
      const auto& x = codewords_[m];
      if (x.rows() != t_ || x.cols() != nt_)
        throw InvalidArgument("Codebook: codeword " + std::to_string(m) + " has wrong shape");
      if (!x.allFinite()) throw InvalidArgument("Codebook: codeword " + std::to_string(m) + " is not finite");
      if (grassmannian_ && unitarityResidual(x) > kUnitarityTolerance)
        throw InvalidArgument("Codebook: codeword " + std::to_string(m) + " violates X^H X = I within 1e-6");
    }
    for (std::size_t i = 0; i < codewords_.size(); ++i) {
      for (std::size_t j = i + 1; j < codewords_.size(); ++j) {
        const double d = grassmannian_ ? chordalDistanceUnchecked(codewords_[i], codewords_[j])
                                       : (codewords_[i] - codewords_[j]).norm();
        if (!(d > kCollapseThreshold))
          throw InvalidArgument("Codebook: codewords " + std::to_string(i) + " and " + std::to_string(j) +
                                " coincide");
      }
    }
  }

  Index t_;
  Index nt_;
  std::vector<ComplexMatrix> codewords_;
  std::string provenance_;
  bool grassmannian_;
};

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

struct UnitarityReport {
  std::vector<double> residuals;
  double maxResidual = 0.0;
  bool pass = true;
};

inline UnitarityReport validateUnitary(const std::vector<ComplexMatrix>& codewords, double tol) {
  UnitarityReport report;
  report.residuals.reserve(codewords.size());
  for (const auto& x : codewords) {
    const double r = unitarityResidual(x);
    report.residuals.push_back(r);
    report.maxResidual = std::max(report.maxResidual, r);
  }
  report.pass = report.maxResidual <= tol;
  return report;
}

inline UnitarityReport validateUnitary(const Codebook& cb, double tol) { return validateUnitary(cb.codewords(), tol); }

struct HistogramBin {
  double lower;
  double upper;
  std::size_t count;
};

struct DistanceSpectrum {
  std::size_t pairCount = 0;
  double meanDistance = 0.0;
  double minDistance = 0.0;
  std::vector<HistogramBin> histogram;
};

inline constexpr double kDefaultBinWidth = 0.01;

/// Pairwise chordal distances over all M(M-1)/2 unordered pairs, binned on [0, sqrt(2 Nt)].
inline DistanceSpectrum distanceSpectrum(const Codebook& cb, double binWidth = kDefaultBinWidth) {
  if (!cb.grassmannian()) throw InvalidArgument("distanceSpectrum: codebook is not Grassmannian");
  if (!(binWidth > 0.0)) throw InvalidArgument("distanceSpectrum: bin width must be positive");
  const double dMax = std::sqrt(2.0 * static_cast<double>(cb.Nt()));
  const auto bins = static_cast<std::size_t>(std::ceil(dMax / binWidth - 1e-12));

  DistanceSpectrum out;
  out.histogram.reserve(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out.histogram.push_back({static_cast<double>(b) * binWidth, static_cast<double>(b + 1) * binWidth, 0});

  double sum = 0.0;
  double minD = std::numeric_limits<double>::infinity();
  const Index m = cb.size();
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      const double d = chordalDistanceUnchecked(cb[i], cb[j]);
      sum += d;
      minD = std::min(minD, d);
      const auto b = std::min(static_cast<std::size_t>(d / binWidth), bins - 1);
      ++out.histogram[b].count;
      ++out.pairCount;
    }
  }
  out.meanDistance = sum / static_cast<double>(out.pairCount);
  out.minDistance = minD;
  return out;
}

/// Minimum pairwise chordal distance.
inline double minPairwiseDistance(const std::vector<ComplexMatrix>& codewords) {
  double minD = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < codewords.size(); ++i)
    for (std::size_t j = i + 1; j < codewords.size(); ++j)
      minD = std::min(minD, chordalDistanceUnchecked(codewords[i], codewords[j]));
  return minD;
}

inline double meanPairwiseDistance(const std::vector<ComplexMatrix>& codewords) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < codewords.size(); ++i)
    for (std::size_t j = i + 1; j < codewords.size(); ++j, ++pairs)
      sum += chordalDistanceUnchecked(codewords[i], codewords[j]);
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

inline void writeSpectrumCsv(std::ostream& os, const DistanceSpectrum& spectrum) {
  std::ostringstream line;
  line.precision(17);
  line << "binLower,binUpper,count\n";
  for (const auto& bin : spectrum.histogram) line << bin.lower << ',' << bin.upper << ',' << bin.count << '\n';
  os << line.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kCodebookFormatVersion = 1;

/// {version, T, Nt, M, grassmannian, provenance, codewords: [[[re, im], ... row-major ...], ...]}
inline nlohmann::json codebookToJson(const Codebook& cb) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& x : cb.codewords()) {
    nlohmann::json entries = nlohmann::json::array();
    for (Index r = 0; r < x.rows(); ++r)
      for (Index c = 0; c < x.cols(); ++c) entries.push_back({x(r, c).real(), x(r, c).imag()});
    words.push_back(std::move(entries));
  }
  return {{"version", kCodebookFormatVersion},
          {"T", cb.T()},
          {"Nt", cb.Nt()},
          {"M", cb.size()},
          {"grassmannian", cb.grassmannian()},
          {"provenance", cb.provenance()},
          {"codewords", std::move(words)}};
}

inline Codebook codebookFromJson(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw FormatError("codebook: top level must be an object");
    if (j.at("version").get<int>() != kCodebookFormatVersion)
      throw FormatError("codebook: unsupported version " + j.at("version").dump());
    const auto t = j.at("T").get<Index>();
    const auto nt = j.at("Nt").get<Index>();
    const auto m = j.at("M").get<Index>();
    const auto& words = j.at("codewords");
    if (t < 1 || nt < 1) throw FormatError("codebook: T and Nt must be positive");
    if (!words.is_array() || static_cast<Index>(words.size()) != m)
      throw FormatError("codebook: header says M=" + std::to_string(m) + " but file holds " +
                        std::to_string(words.size()) + " codewords");
    std::vector<ComplexMatrix> codewords;
    codewords.reserve(static_cast<std::size_t>(m));
    for (const auto& w : words) {
      if (!w.is_array() || static_cast<Index>(w.size()) != t * nt)
        throw FormatError("codebook: codeword entry count does not match T*Nt");
      ComplexMatrix x(t, nt);
      std::size_t k = 0;
      for (Index r = 0; r < t; ++r)
        for (Index c = 0; c < nt; ++c, ++k) {
          const auto& e = w[k];
          if (!e.is_array() || e.size() != 2) throw FormatError("codebook: entries must be [re, im] pairs");
          x(r, c) = Complex(e[0].get<double>(), e[1].get<double>());
        }
      codewords.push_back(std::move(x));
    }
    return Codebook(t, nt, std::move(codewords), j.at("provenance").get<std::string>(),
                    j.at("grassmannian").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("codebook: malformed file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("codebook: invariant violated: ") + e.what());
  }
}

inline std::string dumpCodebook(const Codebook& cb) { return codebookToJson(cb).dump(1) + "\n"; }

inline void saveCodebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << dumpCodebook(cb);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Codebook loadCodebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open codebook " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("codebook: invalid JSON in " + path + ": " + e.what());
  }
  return codebookFromJson(j);
}

}  // namespace ncgrass
