#pragma once

// Umbrella header.

#include "apsense/error.hpp"
#include "apsense/signal_io.hpp"
#include "apsense/preprocess.hpp"
#include "apsense/pulse_features.hpp"
#include "apsense/windowing.hpp"
#include "apsense/balancing.hpp"
#include "apsense/knn_classifier.hpp"
#include "apsense/evaluation.hpp"
#include "apsense/synth.hpp"
#include "apsense/parallel.hpp"
#include "apsense/pipeline.hpp"
