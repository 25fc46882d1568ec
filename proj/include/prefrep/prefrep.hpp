#pragma once

#include "prefrep/core.hpp"
#include "prefrep/datasets.hpp"
#include "prefrep/error.hpp"
#include "prefrep/expressiveness.hpp"
#include "prefrep/gpo.hpp"
#include "prefrep/linalg.hpp"
#include "prefrep/model_io.hpp"
#include "prefrep/models.hpp"
#include "prefrep/preference_data.hpp"
#include "prefrep/training.hpp"
