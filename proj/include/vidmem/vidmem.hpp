#pragma once

// Umbrella header for the vidmem streaming video-memory engine.

#include "vidmem/attention.hpp"
#include "vidmem/backend.hpp"
#include "vidmem/config.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/memory.hpp"
#include "vidmem/numerics.hpp"
#include "vidmem/pipeline.hpp"
#include "vidmem/retrieval.hpp"
#include "vidmem/selection.hpp"
#include "vidmem/trace_io.hpp"
