#pragma once

#include "hdlogit/adjusted_inference.hpp"
#include "hdlogit/amp.hpp"
#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/gauss_quad.hpp"
#include "hdlogit/glm_fit.hpp"
#include "hdlogit/parallel.hpp"
#include "hdlogit/phase_boundary.hpp"
#include "hdlogit/probe_frontier.hpp"
#include "hdlogit/rng.hpp"
#include "hdlogit/sigmoid_prox.hpp"
#include "hdlogit/sim_harness.hpp"
#include "hdlogit/simplex.hpp"
#include "hdlogit/state_evolution.hpp"
