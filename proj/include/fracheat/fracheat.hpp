#pragma once

#include "fracheat/errors.hpp"
#include "fracheat/special_functions.hpp"
#include "fracheat/fractional_laplacian.hpp"
#include "fracheat/stable_kernel.hpp"
#include "fracheat/spde.hpp"
#include "fracheat/moments.hpp"
#include "fracheat/bounds.hpp"
#include "fracheat/io.hpp"
#include "fracheat/svg.hpp"
#include "fracheat/config.hpp"
#include "fracheat/experiment.hpp"
