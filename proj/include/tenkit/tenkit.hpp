#pragma once

#include "tenkit/bench.hpp"
#include "tenkit/cp.hpp"
#include "tenkit/dist.hpp"
#include "tenkit/ffcp.hpp"
#include "tenkit/io.hpp"
#include "tenkit/random.hpp"
#include "tenkit/range_finder.hpp"
#include "tenkit/tensor.hpp"
#include "tenkit/tucker.hpp"
