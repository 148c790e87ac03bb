#pragma once

// Umbrella header for the csrecon toolkit.

#include "csrecon/autodiff.hpp"
#include "csrecon/cascade.hpp"
#include "csrecon/checkpoint.hpp"
#include "csrecon/common.hpp"
#include "csrecon/config.hpp"
#include "csrecon/dataset_io.hpp"
#include "csrecon/eval.hpp"
#include "csrecon/fft.hpp"
#include "csrecon/mask.hpp"
#include "csrecon/metrics.hpp"
#include "csrecon/phantom.hpp"
#include "csrecon/stats.hpp"
#include "csrecon/tensor.hpp"
#include "csrecon/train.hpp"
#include "csrecon/transform.hpp"
#include "csrecon/unet.hpp"
#include "csrecon/volume.hpp"
