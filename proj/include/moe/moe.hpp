#pragma once

#include "activation.hpp"
#include "config.hpp"
#include "cqt.hpp"
#include "decomposition.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "gating_em.hpp"
#include "gating_mom.hpp"
#include "io.hpp"
#include "joint_em.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "quadrature.hpp"
#include "random.hpp"
#include "score.hpp"
#include "sym_tensor.hpp"
#include "tabular.hpp"
