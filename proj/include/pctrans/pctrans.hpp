#pragma once

#include "pctrans/config.hpp"
#include "pctrans/generators.hpp"
#include "pctrans/metrics.hpp"
#include "pctrans/pcds.hpp"
#include "pctrans/pipeline.hpp"
#include "pctrans/svg.hpp"
#include "pctrans/training.hpp"
#include "pctrans/translation.hpp"
#include "pctrans/version.hpp"
