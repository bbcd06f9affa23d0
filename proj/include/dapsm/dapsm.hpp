#pragma once

// Umbrella header.

#include "dapsm/assignment.hpp"
#include "dapsm/balance.hpp"
#include "dapsm/comparators.hpp"
#include "dapsm/csv.hpp"
#include "dapsm/daps.hpp"
#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/estimation.hpp"
#include "dapsm/geometry.hpp"
#include "dapsm/matched_set.hpp"
#include "dapsm/propensity.hpp"
#include "dapsm/rng.hpp"
#include "dapsm/simulation.hpp"
#include "dapsm/simulation_io.hpp"
#include "dapsm/version.hpp"
