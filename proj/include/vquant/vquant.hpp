#pragma once

// Umbrella header for the value-aware quantization toolkit.

#include "vquant/bitpack.hpp"
#include "vquant/datasets.hpp"
#include "vquant/errors.hpp"
#include "vquant/half.hpp"
#include "vquant/memory_model.hpp"
#include "vquant/mlp.hpp"
#include "vquant/model_io.hpp"
#include "vquant/ptq.hpp"
#include "vquant/quant.hpp"
#include "vquant/quant_io.hpp"
#include "vquant/report.hpp"
#include "vquant/rng.hpp"
#include "vquant/schedule.hpp"
#include "vquant/shard.hpp"
#include "vquant/tensor.hpp"
#include "vquant/tensor_io.hpp"
#include "vquant/train.hpp"
#include "vquant/version.hpp"
