#pragma once

#include "drvar/analysis.hpp"
#include "drvar/cli_io.hpp"
#include "drvar/diagnostics.hpp"
#include "drvar/error.hpp"
#include "drvar/influence_bootstrap.hpp"
#include "drvar/model_fitting.hpp"
#include "drvar/parallel.hpp"
#include "drvar/pipeline.hpp"
#include "drvar/resampling_bootstrap.hpp"
#include "drvar/rng.hpp"
#include "drvar/sandwich.hpp"
#include "drvar/sim_lab.hpp"
#include "drvar/stats.hpp"
#include "drvar/types.hpp"
#include "drvar/weighting.hpp"
