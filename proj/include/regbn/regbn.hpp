#pragma once

#include "regbn/batch_norm.hpp"
#include "regbn/binary_io.hpp"
#include "regbn/harness.hpp"
#include "regbn/lambda_solver.hpp"
#include "regbn/lbfgs.hpp"
#include "regbn/matrix.hpp"
#include "regbn/nn.hpp"
#include "regbn/projection.hpp"
#include "regbn/regbn_layer.hpp"
#include "regbn/rng.hpp"
#include "regbn/svd.hpp"
#include "regbn/synthgen.hpp"
