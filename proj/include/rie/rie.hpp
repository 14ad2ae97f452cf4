#pragma once

#include "rie/common.hpp"
#include "rie/config.hpp"
#include "rie/density.hpp"
#include "rie/io.hpp"
#include "rie/models.hpp"
#include "rie/propagate.hpp"
#include "rie/rng.hpp"
#include "rie/sampling.hpp"
#include "rie/verify.hpp"
