#pragma once

// Umbrella header.

#include "srdc/autodiff.hpp"
#include "srdc/checkpoint.hpp"
#include "srdc/clustering.hpp"
#include "srdc/data.hpp"
#include "srdc/errors.hpp"
#include "srdc/evaluation.hpp"
#include "srdc/gradcheck.hpp"
#include "srdc/model.hpp"
#include "srdc/objectives.hpp"
#include "srdc/rng.hpp"
#include "srdc/tensor.hpp"
#include "srdc/trainer.hpp"
