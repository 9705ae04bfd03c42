#pragma once

#include "hypermarg/bounds/bounds.hpp"
#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/lanczos.hpp"
#include "hypermarg/core/parallel.hpp"
#include "hypermarg/core/pcg.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/trace.hpp"
#include "hypermarg/mm/m3c.hpp"
#include "hypermarg/mm/surrogate.hpp"
#include "hypermarg/model/test_problems.hpp"
#include "hypermarg/objective/objective.hpp"
#include "hypermarg/saa/saa.hpp"
