#pragma once

#include "fbflow/geometry.hpp"
#include "fbflow/phase_model.hpp"
#include "fbflow/field.hpp"
#include "fbflow/energy.hpp"
#include "fbflow/solver.hpp"
#include "fbflow/free_boundary.hpp"
#include "fbflow/diagnostics.hpp"
#include "fbflow/experiments.hpp"
#include "fbflow/io.hpp"
