// Trains a small noncoherent constellation (M=16, T=4, Nt=Nr=2) and compares
// it with a greedy packing at a couple of SNR points.
#include <cstdio>

#include "ncgrass/ncgrass.hpp"

using namespace ncgrass;

int main() {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batchesPerEpoch = 20;
  cfg.learningRate = 1e-3;
  const TrainResult trained = trainAndExtract(cfg, [](int epoch, double loss) {
    std::printf("epoch %2d  loss %.3f\n", epoch + 1, loss);
  });

  PackingConfig pcfg;
  pcfg.m = cfg.m;
  pcfg.candidatePoolSize = 5000;
  RngStream packRng(7, 0);
  const Codebook greedy = greedyPack(pcfg, packRng).codebook;

  StoppingRule stop{200, 200'000};
  ChannelConfig ch = cfg.channel();
  for (const Codebook* cb : {&trained.codebook, &greedy}) {
    const SerCurve curve = sweepSer(*cb, ch, {10.0, 15.0}, stop, RngStream(11, 0));
    std::printf("%-12s min d %.3f  mean d %.3f", cb->provenance().c_str(), minPairwiseDistance(cb->codewords()),
                meanPairwiseDistance(cb->codewords()));
    for (const auto& p : curve.points) std::printf("  SER@%gdB %.2e", p.snrDb, p.ser);
    std::printf("\n");
  }
}
