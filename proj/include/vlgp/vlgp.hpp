#pragma once

#include "common.hpp"
#include "estimate.hpp"
#include "geometry.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "kernels.hpp"
#include "likelihoods.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "random.hpp"
#include "scores.hpp"
#include "sparse.hpp"
#include "vecchia.hpp"
