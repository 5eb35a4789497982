#pragma once

#include "roae/data.hpp"
#include "roae/error.hpp"
#include "roae/export.hpp"
#include "roae/io.hpp"
#include "roae/metrics.hpp"
#include "roae/model.hpp"
#include "roae/numerics.hpp"
#include "roae/trainer.hpp"
