#pragma once

#include "mdid/decision.hpp"
#include "mdid/dgp.hpp"
#include "mdid/error.hpp"
#include "mdid/estimators.hpp"
#include "mdid/io.hpp"
#include "mdid/linalg.hpp"
#include "mdid/matcher.hpp"
#include "mdid/monte_carlo.hpp"
#include "mdid/panel.hpp"
#include "mdid/parallel.hpp"
#include "mdid/plugin.hpp"
#include "mdid/rng.hpp"
#include "mdid/stats.hpp"
#include "mdid/theory.hpp"
