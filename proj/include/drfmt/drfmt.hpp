#pragma once

// Umbrella header.

#include "drfmt/baseline.hpp"
#include "drfmt/bench.hpp"
#include "drfmt/error.hpp"
#include "drfmt/fairness.hpp"
#include "drfmt/generator.hpp"
#include "drfmt/instance_json.hpp"
#include "drfmt/lp.hpp"
#include "drfmt/mechanism.hpp"
#include "drfmt/model.hpp"
#include "drfmt/parallel.hpp"
#include "drfmt/random.hpp"
