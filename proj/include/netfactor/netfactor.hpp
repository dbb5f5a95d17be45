#pragma once

#include "netfactor/ame_sampler.hpp"
#include "netfactor/csv.hpp"
#include "netfactor/dependence_test.hpp"
#include "netfactor/errors.hpp"
#include "netfactor/experiments.hpp"
#include "netfactor/linalg.hpp"
#include "netfactor/links.hpp"
#include "netfactor/lowrank.hpp"
#include "netfactor/parallel.hpp"
#include "netfactor/relational_data.hpp"
#include "netfactor/rng.hpp"
