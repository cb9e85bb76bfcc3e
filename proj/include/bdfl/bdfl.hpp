#pragma once

#include "bdfl/adversary.hpp"
#include "bdfl/auditor.hpp"
#include "bdfl/chain.hpp"
#include "bdfl/client.hpp"
#include "bdfl/common.hpp"
#include "bdfl/dataset.hpp"
#include "bdfl/hash.hpp"
#include "bdfl/idx.hpp"
#include "bdfl/model.hpp"
#include "bdfl/overlay.hpp"
#include "bdfl/rng.hpp"
#include "bdfl/scenario.hpp"
#include "bdfl/sim.hpp"
#include "bdfl/update.hpp"
#include "bdfl/util.hpp"
