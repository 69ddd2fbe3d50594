#pragma once

// Umbrella header: the optimal linear filter for discrete-time systems with
// finite-dimensional states and field-valued measurements.

#include "fieldkf/cli.hpp"
#include "fieldkf/config.hpp"
#include "fieldkf/errors.hpp"
#include "fieldkf/filter.hpp"
#include "fieldkf/fourier.hpp"
#include "fieldkf/gain.hpp"
#include "fieldkf/grid.hpp"
#include "fieldkf/kernels.hpp"
#include "fieldkf/oracle.hpp"
#include "fieldkf/pinhole.hpp"
#include "fieldkf/random.hpp"
#include "fieldkf/riccati.hpp"
#include "fieldkf/sampling.hpp"
#include "fieldkf/version.hpp"
