#pragma once

#include "vrpower/bench.hpp"
#include "vrpower/data.hpp"
#include "vrpower/errors.hpp"
#include "vrpower/matrix.hpp"
#include "vrpower/rates.hpp"
#include "vrpower/rng.hpp"
#include "vrpower/solvers.hpp"
#include "vrpower/trace.hpp"
