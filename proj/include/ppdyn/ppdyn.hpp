#pragma once

#include "ppdyn/config.hpp"
#include "ppdyn/dynamics.hpp"
#include "ppdyn/eigensolver.hpp"
#include "ppdyn/error.hpp"
#include "ppdyn/generic_vectors.hpp"
#include "ppdyn/lab.hpp"
#include "ppdyn/lattice.hpp"
#include "ppdyn/measure.hpp"
#include "ppdyn/scaling_fit.hpp"
#include "ppdyn/spacing.hpp"
#include "ppdyn/spectral.hpp"
