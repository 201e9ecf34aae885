#pragma once

// Umbrella header for the powered-descent library.

#include "types.hpp"
#include "model.hpp"
#include "pmp.hpp"
#include "integrate.hpp"
#include "heuristics.hpp"
#include "indirect.hpp"
#include "optimize.hpp"
#include "direct.hpp"
#include "analyze.hpp"
#include "io.hpp"
#include "commands.hpp"
