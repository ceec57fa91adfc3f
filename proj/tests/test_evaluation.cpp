#include "support.hpp"

using namespace ncgrass;
using namespace testing;
using Catch::Matchers::WithinAbs;

namespace {

Codebook orthogonalPair(Index t, Index nt, RngStream& rng) {
  const ComplexMatrix u = randomStiefel(t, t, rng);
  return Codebook(t, nt, {u.leftCols(nt), u.middleCols(nt, nt)}, "orth", true);
}

SerCurve synthetic(const std::vector<double>& snr, const std::function<double(double)>& ser) {
  SerCurve c;
  for (double s : snr) {
    SerPoint p;
    p.snrDb = s;
    p.trials = 1'000'000;
    p.ser = ser(s);
    p.errors = static_cast<std::int64_t>(p.ser * 1e6);
    c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("confidence intervals", "[evaluation]") {
  SerPoint p;
  p.trials = 10000;
  p.errors = 400;
  fillConfidenceInterval(p);
  CHECK(p.ser == 0.04);
  CHECK_FALSE(p.wilson);
  CHECK_THAT(p.halfWidth95, WithinAbs(1.959963984540054 * std::sqrt(0.04 * 0.96 / 10000), 1e-15));

  SerPoint few;
  few.trials = 1000;
  few.errors = 3;
  fillConfidenceInterval(few);
  CHECK(few.wilson);
  CHECK(few.ciLower > 0.0);
  CHECK(few.ciLower < few.ser);
  CHECK(few.ciUpper > few.ser);

  SerPoint none;
  none.trials = 1000;
  fillConfidenceInterval(none);
  CHECK(none.ser == 0.0);
  CHECK(none.ciLower <= 1e-15);
  CHECK(none.ciUpper > 0.0);
}

TEST_CASE("near-noiseless orthogonal pair", "[evaluation]") {
  RngStream rng(91, 0);
  const Codebook cb = orthogonalPair(4, 2, rng);
  ChannelConfig ch;
  const auto p = measureSer(cb, ch, 60.0, {1000, 100000}, RngStream(1, 0));
  CHECK(p.trials == 100000);
  CHECK(p.ser <= 1e-4);
}

TEST_CASE("very low SNR reduces to guessing", "[evaluation]") {
  RngStream rng(92, 0);
  std::vector<ComplexMatrix> w;
  for (int i = 0; i < 8; ++i) w.push_back(randomStiefel(4, 2, rng));
  const Codebook cb(4, 2, w, "rand", true);
  ChannelConfig ch;
  const auto p = measureSer(cb, ch, -40.0, {1'000'000, 20000}, RngStream(2, 0));
  CHECK(std::abs(p.ser - 7.0 / 8.0) <= 3.0 * p.halfWidth95);
  CHECK(p.errors <= p.trials);
}

TEST_CASE("measureSer stopping rule and determinism", "[evaluation]") {
  RngStream rng(93, 0);
  const Codebook cb = orthogonalPair(2, 1, rng);
  ChannelConfig ch;
  ch.t = 2;
  ch.nt = 1;
  ch.nr = 1;
  const RngStream s(3, 0);
  const auto a = measureSer(cb, ch, 5.0, {100, 10'000'000}, s);
  CHECK(a.errors == 100);
  const auto b = measureSer(cb, ch, 5.0, {100, 10'000'000}, s);
  CHECK(a.trials == b.trials);
  const auto c = measureSer(cb, ch, 5.0, {100, 10'000'000}, s, 3);
  CHECK(a.trials == c.trials);
  CHECK(a.errors == c.errors);
  const auto capped = measureSer(cb, ch, 5.0, {1'000'000, 5000}, s);
  CHECK(capped.trials == 5000);
  const auto cappedParallel = measureSer(cb, ch, 5.0, {1'000'000, 5000}, s, 4);
  CHECK(cappedParallel.errors == capped.errors);
  CHECK_THROWS_AS(measureSer(cb, ChannelConfig{}, 5.0, {}, s), InvalidArgument);
}

TEST_CASE("sweeps", "[evaluation]") {
  RngStream rng(94, 0);
  std::vector<ComplexMatrix> w;
  for (int i = 0; i < 8; ++i) w.push_back(randomStiefel(4, 2, rng));
  const Codebook cb(4, 2, w, "rand", true);
  ChannelConfig ch;
  const StoppingRule stop{200, 400000};
  const RngStream s(4, 0);
  CHECK(sweepSer(cb, ch, {}, stop, s).points.empty());
  const SerCurve full = sweepSer(cb, ch, {0, 4, 8, 12}, stop, s);
  CHECK(nonIncreasingWithinCi(full));
  CHECK_FALSE(full.mismatchedDetector);
  const SerCurve lo = sweepSer(cb, ch, {0, 4}, stop, s);
  const SerCurve hi = sweepSer(cb, ch, {8, 12}, stop, s);
  for (int i = 0; i < 2; ++i) {
    CHECK(full.points[static_cast<std::size_t>(i)].trials == lo.points[static_cast<std::size_t>(i)].trials);
    CHECK(full.points[static_cast<std::size_t>(i + 2)].errors == hi.points[static_cast<std::size_t>(i)].errors);
    CHECK(full.points[static_cast<std::size_t>(i + 2)].trials == hi.points[static_cast<std::size_t>(i)].trials);
  }
  CHECK_THROWS_AS(sweepSer(cb, ch, {4, 4}, stop, s), InvalidArgument);

  std::ostringstream csv;
  writeSerCsv(csv, full);
  const std::string text = csv.str();
  CHECK(text.rfind("snr_db,trials,errors,ser,ci95\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  const auto j = toJson(full);
  CHECK(j.at("points").size() == 4);
  CHECK(j.at("stopping_rule").at("min_errors") == 200);
}

TEST_CASE("diversity slope", "[evaluation]") {
  const std::vector<double> snr{0, 3, 6, 9, 12};
  CHECK_THAT(diversitySlope(synthetic(snr, [](double s) { return std::pow(10.0, -s / 10.0); }), 0, 12),
             WithinAbs(1.0, 1e-9));
  CHECK_THAT(diversitySlope(synthetic(snr, [](double s) { return 0.3 * std::pow(10.0, -3.0 * s / 10.0); }), 0, 12),
             WithinAbs(3.0, 1e-9));
  // Default window: top 6 dB.
  const auto kink = synthetic(snr, [](double s) { return s < 6 ? 0.1 : std::pow(10.0, -2.0 * s / 10.0); });
  CHECK_THAT(diversitySlope(kink), WithinAbs(2.0, 1e-9));

  auto withZero = synthetic(snr, [](double s) { return std::pow(10.0, -s / 10.0); });
  withZero.points.back().errors = 0;
  withZero.points.back().ser = 0.0;
  std::size_t skipped = 0;
  CHECK_THAT(diversitySlope(withZero, 0, 12, &skipped), WithinAbs(1.0, 1e-9));
  CHECK(skipped == 1);
  CHECK_THROWS_AS(diversitySlope(withZero, 10, 12), InvalidArgument);
}

TEST_CASE("comparison report", "[evaluation]") {
  const std::vector<double> snr{0, 5, 10, 15};
  SerCurve a = synthetic(snr, [](double s) { return std::pow(10.0, -s / 10.0); });
  SerCurve b = synthetic(snr, [](double s) { return std::pow(10.0, -(s - 1.0) / 10.0); });
  a.provenance = "a";
  b.provenance = "b";
  CHECK_THAT(*snrAtSer(a, 1e-1), WithinAbs(10.0, 1e-9));
  CHECK_FALSE(snrAtSer(a, 1e-3).has_value());
  const auto report = comparisonReport({a, b}, 1e-1);
  CHECK(report.at("gaps").size() == 1);
  CHECK_THAT(report.at("gaps")[0].at("gap_db").get<double>(), WithinAbs(1.0, 1e-9));
}
