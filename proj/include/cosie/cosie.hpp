#ifndef COSIE_COSIE_HPP
#define COSIE_COSIE_HPP

#include "cosie/chi2.hpp"
#include "cosie/dpca.hpp"
#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/harness.hpp"
#include "cosie/inference.hpp"
#include "cosie/io.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"
#include "cosie/multiness.hpp"
#include "cosie/rng.hpp"

#endif  // COSIE_COSIE_HPP
