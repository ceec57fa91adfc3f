#pragma once

// Subcommands of the ncgrass tool. Each command writes its outputs plus a
// manifest (<out>.manifest.json) holding the full config echo, seed, tool
// version, SHA-256 digests of inputs and outputs, and wall time. `replay`
// re-runs a command from its manifest alone.
//
// Exit codes: 0 success, 2 usage/config error, 3 runtime failure.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ncgrass/ncgrass.hpp"

namespace ncgrass::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr std::uint64_t kPackStream = 4;
inline constexpr std::uint64_t kEvaluateStream = 3;

using nlohmann::json;

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void writeFile(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline std::string sha256Hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

inline std::string fileDigest(const std::string& path) { return sha256Hex(readFile(path)); }

inline json readJsonFile(const std::string& path) {
  const std::string text = readFile(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

struct Options {
  bool verbose = false;
  int workers = 1;
};

struct ManifestBuilder {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  json arguments = json::object();
  json inputs = json::array();
  json outputs = json::array();
  json results = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void addInput(const std::string& role, const std::string& path) {
    inputs.push_back({{"role", role}, {"path", path}, {"sha256", fileDigest(path)}});
  }
  void addOutput(const std::string& role, const std::string& path) {
    outputs.push_back({{"role", role}, {"path", path}, {"sha256", fileDigest(path)}});
  }

  void write(const std::string& path) const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json manifest = {{"tool", "ncgrass"},      {"version", kVersion},     {"command", command},
                           {"config", config},       {"seed", seed},            {"arguments", arguments},
                           {"inputs", inputs},       {"outputs", outputs},      {"results", results},
                           {"wall_seconds", wall}};
    writeFile(path, manifest.dump(2) + "\n");
  }
};

inline std::string manifestPathFor(const std::string& out) { return out + ".manifest.json"; }

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  json config;
  std::string out;
  std::string report;      // defaults to <out>.report.json
  std::string checkpoint;  // optional
};

inline int runTrain(const TrainArgs& args, const Options& opt) {
  const TrainConfig cfg = trainConfigFromJson(args.config);
  if (!cfg.channel().matchesReferenceAntennaRule())
    std::cerr << "warning: nt != min(floor(t/2), nr); continuing\n";
  ManifestBuilder manifest;
  manifest.command = "train";
  manifest.config = toJson(cfg);
  manifest.seed = cfg.seed;

  Autoencoder model(cfg);
  TrainReport report;
  try {
    report = train(model, [&](int epoch, double loss) {
      if (opt.verbose) std::cerr << "epoch " << epoch + 1 << "/" << cfg.epochs << " mean batch loss " << loss << "\n";
    });
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  if (report.skippedSteps > 0)
    std::cerr << "warning: skipped " << report.skippedSteps << " batches on near-singular Gram matrices\n";

  std::optional<Codebook> cb;
  try {
    cb.emplace(extractCodebook(model));
  } catch (const CodebookCollapseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  if (cfg.mode == TrainMode::Grassmannian && !cb->grassmannian()) {
    std::cerr << "error: extracted codebook fails the unitarity check\n";
    return kExitRuntime;
  }

  const std::string reportPath = args.report.empty() ? args.out + ".report.json" : args.report;
  const std::string lossPath = args.out + ".loss.csv";
  saveCodebook(*cb, args.out);
  json reportJson = toJson(report);
  reportJson.erase("wall_seconds");  // keep the report reproducible; wall time lives in the manifest
  writeFile(reportPath, reportJson.dump(2) + "\n");
  {
    std::ostringstream csv;
    csv.precision(17);
    csv << "epoch,mean_batch_loss\n";
    for (std::size_t e = 0; e < report.epochMeanLoss.size(); ++e) csv << e + 1 << ',' << report.epochMeanLoss[e] << '\n';
    writeFile(lossPath, csv.str());
  }
  manifest.addOutput("codebook", args.out);
  manifest.addOutput("report", reportPath);
  manifest.addOutput("loss_series", lossPath);
  if (!args.checkpoint.empty()) {
    std::ofstream ck(args.checkpoint, std::ios::binary | std::ios::trunc);
    nn::writeCheckpoint(ck, {{"encoder", &model.encoder()}, {"decoder", &model.decoder()}}, cfg.seed, nullptr,
                        {{"config", toJson(cfg)}});
    ck.close();
    manifest.addOutput("checkpoint", args.checkpoint);
    manifest.arguments["checkpoint"] = args.checkpoint;
  }
  manifest.arguments["out"] = args.out;
  manifest.arguments["report"] = reportPath;
  manifest.results = {{"final_epoch_loss", report.epochMeanLoss.back()},
                      {"skipped_steps", report.skippedSteps},
                      {"grassmannian", cb->grassmannian()},
                      {"train_wall_seconds", report.wallSeconds}};
  manifest.write(manifestPathFor(args.out));
  if (opt.verbose) std::cerr << "wrote " << args.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pack
// ---------------------------------------------------------------------------

struct PackArgs {
  json config;
  std::string method;
  std::string out;
};

inline int runPack(const PackArgs& args, const Options& opt) {
  if (args.method != "greedy" && args.method != "lloyd" && args.method != "random") {
    std::cerr << "error: unknown packing method '" << args.method << "' (expected greedy, lloyd or random)\n";
    return kExitUsage;
  }
  const PackingConfig cfg = packingConfigFromJson(args.config);
  ManifestBuilder manifest;
  manifest.command = "pack";
  manifest.config = toJson(cfg);
  manifest.seed = cfg.seed;
  manifest.arguments = {{"method", args.method}, {"out", args.out}};

  RngStream rng(cfg.seed, kPackStream);
  std::optional<Codebook> cb;
  if (args.method == "greedy") {
    auto result = greedyPack(cfg, rng);
    manifest.results["min_distance"] = result.minDistance;
    cb.emplace(std::move(result.codebook));
  } else if (args.method == "lloyd") {
    auto result = lloydPack(cfg, rng);
    manifest.results["reseeded_clusters"] = result.details.reseededClusters;
    manifest.results["mean_distance_drops"] = result.details.meanDistanceDrops;
    if (opt.verbose && result.details.reseededClusters > 0)
      std::cerr << "lloyd: reseeded " << result.details.reseededClusters << " empty clusters\n";
    cb.emplace(std::move(result.codebook));
  } else {
    cb.emplace(randomCodebook(cfg, rng));
  }
  saveCodebook(*cb, args.out);
  manifest.results["mean_distance"] = meanPairwiseDistance(cb->codewords());
  manifest.results["min_pairwise_distance"] = minPairwiseDistance(cb->codewords());
  manifest.addOutput("codebook", args.out);
  manifest.write(manifestPathFor(args.out));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string codebook;
  json channel;
  std::vector<double> snrList;
  std::string out;
};

inline int runEvaluate(const EvaluateArgs& args, const Options& opt) {
  const ChannelConfig ch = channelConfigFromJson(args.channel);
  StoppingRule stop;
  stop.minErrors = args.channel.value("min_errors", stop.minErrors);
  stop.maxTrials = args.channel.value("max_trials", stop.maxTrials);
  if (stop.minErrors < 1 || stop.maxTrials < 1) throw ConfigError("evaluate: min_errors and max_trials must be positive");
  const Codebook cb = loadCodebook(args.codebook);
  if (cb.T() != ch.t || cb.Nt() != ch.nt) throw ConfigError("evaluate: channel t/nt do not match the codebook");
  if (!cb.grassmannian())
    std::cerr << "warning: codebook is not Grassmannian; the subspace detector is mismatched for it\n";

  ManifestBuilder manifest;
  manifest.command = "evaluate";
  json echo = toJson(ch);
  echo["min_errors"] = stop.minErrors;
  echo["max_trials"] = stop.maxTrials;
  manifest.config = echo;
  manifest.seed = ch.seed;
  manifest.arguments = {{"codebook", args.codebook}, {"snr", args.snrList}, {"out", args.out}};
  manifest.addInput("codebook", args.codebook);

  const SerCurve curve = sweepSer(cb, ch, args.snrList, stop, RngStream(ch.seed, kEvaluateStream), opt.workers);
  std::ostringstream csv;
  writeSerCsv(csv, curve);
  writeFile(args.out, csv.str());
  manifest.addOutput("ser_curve", args.out);
  manifest.results = toJson(curve);
  manifest.write(manifestPathFor(args.out));
  if (opt.verbose)
    for (const auto& p : curve.points)
      std::cerr << p.snrDb << " dB: SER " << p.ser << " (" << p.errors << "/" << p.trials << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string codebook;
  std::string out;
  double binWidth = kDefaultBinWidth;
};

inline int runAnalyze(const AnalyzeArgs& args, const Options&) {
  const Codebook cb = loadCodebook(args.codebook);
  if (!cb.grassmannian()) {
    std::cerr << "error: distance spectrum needs a Grassmannian codebook; chordal distance is defined for "
                 "orthonormal-column codewords only\n";
    return kExitUsage;
  }
  if (!(args.binWidth > 0.0)) throw ConfigError("analyze: bin width must be positive");
  const DistanceSpectrum spectrum = distanceSpectrum(cb, args.binWidth);
  std::ostringstream csv;
  writeSpectrumCsv(csv, spectrum);
  writeFile(args.out, csv.str());

  ManifestBuilder manifest;
  manifest.command = "analyze";
  manifest.config = {{"bin_width", args.binWidth}};
  manifest.arguments = {{"codebook", args.codebook}, {"out", args.out}};
  manifest.addInput("codebook", args.codebook);
  manifest.addOutput("spectrum", args.out);
  manifest.results = {{"pairs", spectrum.pairCount}, {"mean", spectrum.meanDistance}, {"min", spectrum.minDistance}};
  manifest.write(manifestPathFor(args.out));

  std::ostringstream summary;
  summary.precision(17);
  summary << "mean,min\n" << spectrum.meanDistance << ',' << spectrum.minDistance << '\n';
  std::cout << summary.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

/// Re-runs the command recorded in a manifest. `outOverride` redirects the primary output.
inline int runReplay(const std::string& manifestPath, const std::string& outOverride, const Options& opt) {
  const json m = readJsonFile(manifestPath);
  try {
    for (const auto& input : m.at("inputs")) {
      const auto path = input.at("path").get<std::string>();
      if (fileDigest(path) != input.at("sha256").get<std::string>()) {
        std::cerr << "error: input " << path << " does not match the manifest digest\n";
        return kExitUsage;
      }
    }
    const auto command = m.at("command").get<std::string>();
    const auto& a = m.at("arguments");
    const std::string out = outOverride.empty() ? a.at("out").get<std::string>() : outOverride;
    if (command == "train") {
      TrainArgs t{m.at("config"), out, outOverride.empty() ? a.at("report").get<std::string>() : "", ""};
      return runTrain(t, opt);
    }
    if (command == "pack") return runPack({m.at("config"), a.at("method").get<std::string>(), out}, opt);
    if (command == "evaluate")
      return runEvaluate({a.at("codebook").get<std::string>(), m.at("config"), a.at("snr").get<std::vector<double>>(),
                          out},
                         opt);
    if (command == "analyze")
      return runAnalyze({a.at("codebook").get<std::string>(), out, m.at("config").at("bin_width").get<double>()}, opt);
    std::cerr << "error: manifest names unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline std::vector<double> parseSnrList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid SNR value '" + item + "'");
    }
  }
  return out;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Grassmannian constellation learning and evaluation for noncoherent MIMO", "ncgrass"};
  app.require_subcommand(1);
  Options opt;
  std::optional<std::uint64_t> seed;
  app.add_flag("-v,--verbose", opt.verbose, "Progress output on stderr");

  std::string config, out, method, codebook, snr, report, checkpoint, manifestPath;
  double binWidth = kDefaultBinWidth;

  auto* train = app.add_subcommand("train", "Train an autoencoder and write the learned codebook");
  train->add_option("--config", config, "Training config JSON")->required();
  train->add_option("--out", out, "Codebook JSON output")->required();
  train->add_option("--report", report, "Training report JSON (default <out>.report.json)");
  train->add_option("--checkpoint", checkpoint, "Network checkpoint output");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_flag("-v,--verbose", opt.verbose);

  auto* pack = app.add_subcommand("pack", "Generate a baseline codebook");
  pack->add_option("--config", config, "Packing config JSON")->required();
  pack->add_option("--method", method, "greedy | lloyd | random")->required();
  pack->add_option("--out", out, "Codebook JSON output")->required();
  pack->add_option("--seed", seed, "Override the config seed");
  pack->add_flag("-v,--verbose", opt.verbose);

  auto* evaluate = app.add_subcommand("evaluate", "Monte Carlo SER sweep with the subspace ML detector");
  evaluate->add_option("--codebook", codebook, "Codebook JSON")->required();
  evaluate->add_option("--config", config, "Channel config JSON")->required();
  evaluate->add_option("--snr", snr, "Comma-separated SNR list in dB")->required();
  evaluate->add_option("--out", out, "SER CSV output")->required();
  evaluate->add_option("--seed", seed, "Override the config seed");
  evaluate->add_option("--workers", opt.workers, "Parallel Monte Carlo workers")->check(CLI::PositiveNumber);
  evaluate->add_flag("-v,--verbose", opt.verbose);

  auto* analyze = app.add_subcommand("analyze", "Pairwise chordal distance spectrum");
  analyze->add_option("--codebook", codebook, "Codebook JSON")->required();
  analyze->add_option("--out", out, "Spectrum CSV output")->required();
  analyze->add_option("--bin-width", binWidth, "Histogram bin width");
  analyze->add_flag("-v,--verbose", opt.verbose);

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("--manifest", manifestPath, "Manifest JSON")->required();
  replay->add_option("--out", out, "Redirect the primary output");
  replay->add_option("--workers", opt.workers, "Parallel Monte Carlo workers")->check(CLI::PositiveNumber);
  replay->add_flag("-v,--verbose", opt.verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto withSeed = [&](json j) {
    if (seed) j["seed"] = *seed;
    return j;
  };

  try {
    if (*train) return runTrain({withSeed(readJsonFile(config)), out, report, checkpoint}, opt);
    if (*pack) return runPack({withSeed(readJsonFile(config)), method, out}, opt);
    if (*evaluate) return runEvaluate({codebook, withSeed(readJsonFile(config)), parseSnrList(snr), out}, opt);
    if (*analyze) return runAnalyze({codebook, out, binWidth}, opt);
    if (*replay) return runReplay(manifestPath, out, opt);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ncgrass::cli
