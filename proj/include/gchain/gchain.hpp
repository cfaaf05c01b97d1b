#pragma once

#include "gchain/errors.hpp"
#include "gchain/rng.hpp"
#include "gchain/parallel.hpp"
#include "gchain/young.hpp"
#include "gchain/metric.hpp"
#include "gchain/net.hpp"
#include "gchain/chain.hpp"
#include "gchain/procsim.hpp"
#include "gchain/empsq.hpp"
#include "gchain/sensing.hpp"
#include "gchain/io.hpp"
#include "gchain/cli.hpp"
