// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mrgd/error.hpp"
#include "mrgd/core.hpp"
#include "mrgd/segmenter.hpp"
#include "mrgd/rewards.hpp"
#include "mrgd/extraction.hpp"
#include "mrgd/backends/interfaces.hpp"
#include "mrgd/backends/protocol.hpp"
#include "mrgd/backends/fixture.hpp"
#include "mrgd/backends/sim.hpp"
#include "mrgd/backends/remote.hpp"
#include "mrgd/backends/factory.hpp"
#include "mrgd/decoder.hpp"
#include "mrgd/eval.hpp"
#include "mrgd/config.hpp"
