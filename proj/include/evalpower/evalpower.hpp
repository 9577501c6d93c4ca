#pragma once

#include "evalpower/classical_tests.hpp"
#include "evalpower/clmm.hpp"
#include "evalpower/data_model.hpp"
#include "evalpower/design.hpp"
#include "evalpower/design_types.hpp"
#include "evalpower/error.hpp"
#include "evalpower/inference.hpp"
#include "evalpower/numeric.hpp"
#include "evalpower/parallel.hpp"
#include "evalpower/random.hpp"
#include "evalpower/reliability.hpp"
#include "evalpower/simulation.hpp"
