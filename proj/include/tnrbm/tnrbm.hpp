#pragma once

#include "tnrbm/data_io.hpp"
#include "tnrbm/errors.hpp"
#include "tnrbm/models.hpp"
#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tasks.hpp"
#include "tnrbm/tensor.hpp"
#include "tnrbm/training.hpp"
