#ifndef CORRMVS_CORRMVS_HPP_
#define CORRMVS_CORRMVS_HPP_

#include "corrmvs/correlation.hpp"
#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/io.hpp"
#include "corrmvs/metrics.hpp"
#include "corrmvs/nn.hpp"
#include "corrmvs/parallel.hpp"
#include "corrmvs/random.hpp"
#include "corrmvs/refine.hpp"
#include "corrmvs/synthscene.hpp"
#include "corrmvs/triangulation.hpp"
#include "corrmvs/upsample.hpp"

#endif  // CORRMVS_CORRMVS_HPP_
