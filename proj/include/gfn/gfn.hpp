#pragma once

// Umbrella header for the whole engine.

#include "gfn/analysis.hpp"
#include "gfn/config.hpp"
#include "gfn/dag.hpp"
#include "gfn/environments.hpp"
#include "gfn/errors.hpp"
#include "gfn/flow.hpp"
#include "gfn/losses.hpp"
#include "gfn/numeric.hpp"
#include "gfn/param.hpp"
#include "gfn/policy.hpp"
#include "gfn/random.hpp"
#include "gfn/serialization.hpp"
#include "gfn/training.hpp"
#include "gfn/trajectory.hpp"
