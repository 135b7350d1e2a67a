#pragma once

// Umbrella header for the Soft Transfer Network library.

#include "stn/data.hpp"
#include "stn/errors.hpp"
#include "stn/eval.hpp"
#include "stn/gradcheck.hpp"
#include "stn/losses.hpp"
#include "stn/matrix.hpp"
#include "stn/model.hpp"
#include "stn/nn.hpp"
#include "stn/rng.hpp"
#include "stn/trainer.hpp"
