#pragma once

#include "mlearn/analysis.hpp"
#include "mlearn/clopen.hpp"
#include "mlearn/deficiency.hpp"
#include "mlearn/domination.hpp"
#include "mlearn/experiment.hpp"
#include "mlearn/learners.hpp"
#include "mlearn/scenario.hpp"
#include "mlearn/sparse.hpp"
#include "mlearn/trace.hpp"
