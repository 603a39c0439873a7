#pragma once

// Everything: networks, ESP, transfer, environments, harness, analysis.

#include "grusm/analysis.hpp"
#include "grusm/env.hpp"
#include "grusm/environments.hpp"
#include "grusm/error.hpp"
#include "grusm/esp.hpp"
#include "grusm/external_env.hpp"
#include "grusm/harness.hpp"
#include "grusm/io.hpp"
#include "grusm/matrix.hpp"
#include "grusm/miniarcade.hpp"
#include "grusm/net.hpp"
#include "grusm/parallel.hpp"
#include "grusm/rng.hpp"
#include "grusm/serialize.hpp"
#include "grusm/transfer.hpp"
