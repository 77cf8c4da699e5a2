#pragma once

// Umbrella header for the DQSB simulation library: a deterministic
// discrete-event simulator for receiver-triggered quasi-synchronized
// broadcast in asynchronous duty-cycled wireless sensor networks, with
// full-preamble flooding and low-power-listening baselines, trace-level
// invariant checkers, and an experiment runner.

#include "dqsb/time.hpp"
#include "dqsb/rng.hpp"
#include "dqsb/model.hpp"
#include "dqsb/packets.hpp"
#include "dqsb/state.hpp"
#include "dqsb/trace.hpp"
#include "dqsb/channel.hpp"
#include "dqsb/engine.hpp"
#include "dqsb/protocol.hpp"
#include "dqsb/baselines.hpp"
#include "dqsb/metrics.hpp"
#include "dqsb/config.hpp"
#include "dqsb/runner.hpp"
