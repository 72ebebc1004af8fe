#pragma once

#include "nlexit/errors.hpp"
#include "nlexit/intervals.hpp"
#include "nlexit/kernel.hpp"
#include "nlexit/geometry.hpp"
#include "nlexit/operator.hpp"
#include "nlexit/solver.hpp"
#include "nlexit/montecarlo.hpp"
