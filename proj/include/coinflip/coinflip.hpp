#pragma once

#include "coinflip/analysis.hpp"
#include "coinflip/builder.hpp"
#include "coinflip/channel.hpp"
#include "coinflip/constants.hpp"
#include "coinflip/error.hpp"
#include "coinflip/outcome.hpp"
#include "coinflip/probability.hpp"
#include "coinflip/report.hpp"
#include "coinflip/session.hpp"
#include "coinflip/simulate.hpp"
#include "coinflip/transcript.hpp"
#include "coinflip/tree.hpp"
