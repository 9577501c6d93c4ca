#pragma once

#include "evalpower/clmm/fit.hpp"
#include "evalpower/clmm/laplace.hpp"
#include "evalpower/clmm/link.hpp"
#include "evalpower/clmm/params.hpp"
#include "evalpower/clmm/sample.hpp"
