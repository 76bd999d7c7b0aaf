#pragma once

#include "types.hpp"
#include "random.hpp"
#include "linalg.hpp"
#include "system.hpp"
#include "io.hpp"
#include "dense_stein.hpp"
#include "lowrank.hpp"
#include "balancing.hpp"
#include "bounds.hpp"
#include "report.hpp"
#include "pipeline.hpp"
