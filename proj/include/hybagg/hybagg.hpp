#pragma once

// Umbrella header: the full aggregation stack in dependency order.

#include "hybagg/errors.hpp"    // IWYU pragma: export
#include "hybagg/ring.hpp"      // IWYU pragma: export
#include "hybagg/sampling.hpp"  // IWYU pragma: export
#include "hybagg/codec.hpp"     // IWYU pragma: export
#include "hybagg/mkckks.hpp"    // IWYU pragma: export
#include "hybagg/masking.hpp"   // IWYU pragma: export
#include "hybagg/protocol.hpp"  // IWYU pragma: export
#include "hybagg/bench.hpp"     // IWYU pragma: export
