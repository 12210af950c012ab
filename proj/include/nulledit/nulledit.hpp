#pragma once

#include "nulledit/linalg.hpp"
#include "nulledit/erasure.hpp"
#include "nulledit/rng.hpp"
#include "nulledit/theory.hpp"
#include "nulledit/bench.hpp"
#include "nulledit/io.hpp"
#include "nulledit/report.hpp"
