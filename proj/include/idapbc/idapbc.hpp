#pragma once

#include "idapbc/errors.hpp"
#include "idapbc/models.hpp"
#include "idapbc/control.hpp"
#include "idapbc/integrator.hpp"
#include "idapbc/quadrature.hpp"
#include "idapbc/verifier.hpp"
#include "idapbc/contour.hpp"
#include "idapbc/lyapunov.hpp"
#include "idapbc/estimator.hpp"
#include "idapbc/sim.hpp"
#include "idapbc/experiments.hpp"
#include "idapbc/io.hpp"
#include "idapbc/config.hpp"
