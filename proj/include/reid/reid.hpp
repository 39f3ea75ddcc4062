#pragma once

// Umbrella header for the re-identification toolkit.

#include "reid/adam.hpp"
#include "reid/config.hpp"
#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/evaluator.hpp"
#include "reid/gradcheck.hpp"
#include "reid/image.hpp"
#include "reid/losses.hpp"
#include "reid/manifest.hpp"
#include "reid/matcher.hpp"
#include "reid/model.hpp"
#include "reid/pipeline.hpp"
#include "reid/plot.hpp"
#include "reid/rng.hpp"
#include "reid/schema.hpp"
#include "reid/serialize.hpp"
#include "reid/synthetic.hpp"
#include "reid/tensor.hpp"
#include "reid/trainer.hpp"
