#pragma once

// Umbrella header for the psforge photometric stereo toolkit.

#include "psforge/core/error.hpp"
#include "psforge/core/metrics.hpp"
#include "psforge/core/normal_image.hpp"
#include "psforge/core/png_io.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/core/tensor_file.hpp"
#include "psforge/core/types.hpp"
#include "psforge/core/vec3.hpp"

#include "psforge/obsmap/observation_map.hpp"

#include "psforge/synth/brdf.hpp"
#include "psforge/synth/heightfield.hpp"
#include "psforge/synth/lights.hpp"
#include "psforge/synth/material.hpp"
#include "psforge/synth/render.hpp"

#include "psforge/micronet/adam.hpp"
#include "psforge/micronet/gradcheck.hpp"
#include "psforge/micronet/layers.hpp"
#include "psforge/micronet/network.hpp"
#include "psforge/micronet/tensor.hpp"
#include "psforge/micronet/weights_io.hpp"

#include "psforge/baseline/lambertian.hpp"

#include "psforge/pipeline/dataset.hpp"
#include "psforge/pipeline/predict.hpp"
#include "psforge/pipeline/train.hpp"

#include "psforge/io/config.hpp"
#include "psforge/io/dataset_dir.hpp"
