#pragma once

// Umbrella header.

#include "wittenflow/core.hpp"
#include "wittenflow/surface.hpp"
#include "wittenflow/mesh.hpp"
#include "wittenflow/critical.hpp"
#include "wittenflow/flow.hpp"
#include "wittenflow/resonance.hpp"
#include "wittenflow/dec.hpp"
#include "wittenflow/witten.hpp"
#include "wittenflow/morse_complex.hpp"
#include "wittenflow/wkb.hpp"
#include "wittenflow/io.hpp"
#include "wittenflow/pipeline.hpp"
