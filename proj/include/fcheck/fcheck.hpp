#pragma once

// Convenience include for the whole library.

#include "fcheck/backend.hpp"
#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"
#include "fcheck/entail.hpp"
#include "fcheck/labrunner.hpp"
#include "fcheck/metrics.hpp"
#include "fcheck/promptkit.hpp"
#include "fcheck/verdict.hpp"
