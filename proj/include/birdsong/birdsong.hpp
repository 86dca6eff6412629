#pragma once

// Umbrella header for the whole pipeline.

#include "birdsong/audio.hpp"
#include "birdsong/augment.hpp"
#include "birdsong/cnn.hpp"
#include "birdsong/config.hpp"
#include "birdsong/core.hpp"
#include "birdsong/denoise.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/evaluate.hpp"
#include "birdsong/features.hpp"
#include "birdsong/fetch.hpp"
#include "birdsong/fft.hpp"
#include "birdsong/forest.hpp"
#include "birdsong/image.hpp"
#include "birdsong/knn.hpp"
#include "birdsong/manifest.hpp"
#include "birdsong/model_io.hpp"
#include "birdsong/pipeline.hpp"
#include "birdsong/rebalance.hpp"
#include "birdsong/rng.hpp"
