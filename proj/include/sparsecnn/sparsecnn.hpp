#pragma once

// Umbrella header for the sparse CNN engine.

#include "sparsecnn/analysis.hpp"
#include "sparsecnn/augment.hpp"
#include "sparsecnn/config.hpp"
#include "sparsecnn/dataset.hpp"
#include "sparsecnn/encode.hpp"
#include "sparsecnn/errors.hpp"
#include "sparsecnn/grid.hpp"
#include "sparsecnn/layers.hpp"
#include "sparsecnn/network.hpp"
#include "sparsecnn/pipeline.hpp"
#include "sparsecnn/rng.hpp"
#include "sparsecnn/strokes.hpp"
#include "sparsecnn/train.hpp"
