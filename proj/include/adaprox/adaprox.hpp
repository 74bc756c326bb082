#pragma once

// Umbrella include for the whole toolkit.

#include "adaprox/bench.hpp"
#include "adaprox/datagen.hpp"
#include "adaprox/linalg.hpp"
#include "adaprox/log.hpp"
#include "adaprox/problems.hpp"
#include "adaprox/prox.hpp"
#include "adaprox/rng.hpp"
#include "adaprox/schemes.hpp"
#include "adaprox/solver.hpp"
#include "adaprox/types.hpp"
