#pragma once

#include "ed/attention.hpp"
#include "ed/backend.hpp"
#include "ed/backends.hpp"
#include "ed/config.hpp"
#include "ed/decoder.hpp"
#include "ed/ensemble.hpp"
#include "ed/error.hpp"
#include "ed/image.hpp"
#include "ed/metrics.hpp"
#include "ed/protocol.hpp"
#include "ed/sampling.hpp"
#include "ed/synthetic_backend.hpp"
#include "ed/tiling.hpp"
#include "ed/conformance.hpp"
