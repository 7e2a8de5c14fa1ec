#pragma once

// Umbrella header: the full simulation and analysis surface.

#include "hspsim/analysis.hpp"
#include "hspsim/config.hpp"
#include "hspsim/counting.hpp"
#include "hspsim/errors.hpp"
#include "hspsim/homodyne.hpp"
#include "hspsim/io.hpp"
#include "hspsim/pair_source.hpp"
#include "hspsim/pipeline.hpp"
#include "hspsim/rng.hpp"
#include "hspsim/version.hpp"
