#pragma once

// Convenience include for the whole library.

#include "mcsd/checkpoint.hpp"
#include "mcsd/cli.hpp"
#include "mcsd/common.hpp"
#include "mcsd/config.hpp"
#include "mcsd/data.hpp"
#include "mcsd/grad_check.hpp"
#include "mcsd/layers.hpp"
#include "mcsd/loss.hpp"
#include "mcsd/metrics.hpp"
#include "mcsd/model.hpp"
#include "mcsd/ops.hpp"
#include "mcsd/optim.hpp"
#include "mcsd/overlay.hpp"
#include "mcsd/png_io.hpp"
#include "mcsd/rng.hpp"
#include "mcsd/stmu.hpp"
#include "mcsd/synth.hpp"
#include "mcsd/tape.hpp"
#include "mcsd/tensor.hpp"
#include "mcsd/train.hpp"
#include "mcsd/verify.hpp"
