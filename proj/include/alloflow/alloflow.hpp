#pragma once

#include "alloflow/binio.hpp"
#include "alloflow/config.hpp"
#include "alloflow/data.hpp"
#include "alloflow/errors.hpp"
#include "alloflow/flow.hpp"
#include "alloflow/gradcheck.hpp"
#include "alloflow/losses.hpp"
#include "alloflow/metrics.hpp"
#include "alloflow/net.hpp"
#include "alloflow/pipeline.hpp"
#include "alloflow/rng.hpp"
#include "alloflow/schedule.hpp"
#include "alloflow/snr.hpp"
#include "alloflow/train.hpp"
#include "alloflow/vec.hpp"
