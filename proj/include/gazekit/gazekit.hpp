#pragma once

#include "gazekit/augment.hpp"
#include "gazekit/checkpoint.hpp"
#include "gazekit/datapipe.hpp"
#include "gazekit/error.hpp"
#include "gazekit/gaze_estimator.hpp"
#include "gazekit/geometry.hpp"
#include "gazekit/harness.hpp"
#include "gazekit/image.hpp"
#include "gazekit/manifest.hpp"
#include "gazekit/nn.hpp"
#include "gazekit/plot.hpp"
#include "gazekit/png_io.hpp"
#include "gazekit/rng.hpp"
#include "gazekit/segmenter.hpp"
#include "gazekit/ssl_pretrain.hpp"
#include "gazekit/synth_eye.hpp"
