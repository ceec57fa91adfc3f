#pragma once

#include "ncgrass/autoencoder.hpp"
#include "ncgrass/baselines.hpp"
#include "ncgrass/channel.hpp"
#include "ncgrass/constellation.hpp"
#include "ncgrass/detector.hpp"
#include "ncgrass/error.hpp"
#include "ncgrass/evaluation.hpp"
#include "ncgrass/matrix.hpp"
#include "ncgrass/nn.hpp"
#include "ncgrass/rng.hpp"

namespace ncgrass {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ncgrass
