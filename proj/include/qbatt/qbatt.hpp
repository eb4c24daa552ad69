#pragma once

#include "errors.hpp"
#include "experiment.hpp"
#include "fluctuation.hpp"
#include "local.hpp"
#include "optim.hpp"
#include "oracle.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "spectrum.hpp"
#include "states.hpp"
#include "trace.hpp"
