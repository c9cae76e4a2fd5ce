#pragma once

#include "fkdiag/config.hpp"
#include "fkdiag/dictionary.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/eval.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/io.hpp"
#include "fkdiag/pipeline.hpp"
#include "fkdiag/pursuit.hpp"
#include "fkdiag/random.hpp"
#include "fkdiag/rbm.hpp"
#include "fkdiag/waveguide.hpp"
