#pragma once

// Umbrella header for the whole library.

#include "stepwise/cohort.hpp"
#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/eval.hpp"
#include "stepwise/features.hpp"
#include "stepwise/interpret.hpp"
#include "stepwise/io.hpp"
#include "stepwise/model/checkpoint.hpp"
#include "stepwise/model/forest.hpp"
#include "stepwise/model/logreg.hpp"
#include "stepwise/model/lstm.hpp"
#include "stepwise/model/train.hpp"
#include "stepwise/parallel.hpp"
#include "stepwise/synth.hpp"
