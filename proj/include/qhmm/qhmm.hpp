#pragma once

#include "qhmm/error.hpp"
#include "qhmm/tolerances.hpp"
#include "qhmm/operator_core.hpp"
#include "qhmm/instrument.hpp"
#include "qhmm/perron_frobenius.hpp"
#include "qhmm/asymptotic_variance.hpp"
#include "qhmm/cgf.hpp"
#include "qhmm/deviation_bounds.hpp"
#include "qhmm/simulate.hpp"
#include "qhmm/fixtures.hpp"
