#pragma once

#include "netreg/error.hpp"
#include "netreg/rng.hpp"
#include "netreg/linalg.hpp"
#include "netreg/model_core.hpp"
#include "netreg/matrix_io.hpp"
#include "netreg/interaction.hpp"
#include "netreg/sampling.hpp"
#include "netreg/optimize.hpp"
#include "netreg/logistic_mple.hpp"
#include "netreg/linear_mle.hpp"
#include "netreg/experiments.hpp"
