#pragma once

// Umbrella header for the topology-aware joint source-channel coding library.

#include "topojscc/autodiff.hpp"
#include "topojscc/channel.hpp"
#include "topojscc/cubical.hpp"
#include "topojscc/diagram.hpp"
#include "topojscc/gradcheck.hpp"
#include "topojscc/io.hpp"
#include "topojscc/jscc.hpp"
#include "topojscc/rips.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"
#include "topojscc/topo_loss.hpp"
#include "topojscc/train.hpp"
#include "topojscc/wasserstein.hpp"
