#pragma once

#include "vecrank/click_sim.hpp"
#include "vecrank/data.hpp"
#include "vecrank/eval.hpp"
#include "vecrank/experiment.hpp"
#include "vecrank/models.hpp"
#include "vecrank/nn.hpp"
#include "vecrank/rng.hpp"
#include "vecrank/trainer.hpp"
