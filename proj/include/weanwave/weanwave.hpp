#pragma once

// Umbrella header: the whole toolkit in one include.

#include "weanwave/common.hpp"
#include "weanwave/cwt.hpp"
#include "weanwave/hpo.hpp"
#include "weanwave/imaging.hpp"
#include "weanwave/interp.hpp"
#include "weanwave/metrics.hpp"
#include "weanwave/nn.hpp"
#include "weanwave/occlusion.hpp"
#include "weanwave/pipeline.hpp"
#include "weanwave/series.hpp"
#include "weanwave/spectrum.hpp"
#include "weanwave/synth.hpp"
#include "weanwave/train.hpp"
#include "weanwave/variables.hpp"
