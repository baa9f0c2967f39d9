#pragma once

#include "magchain/csv.hpp"
#include "magchain/designer.hpp"
#include "magchain/dipole.hpp"
#include "magchain/equilibrium.hpp"
#include "magchain/errors.hpp"
#include "magchain/kinematics.hpp"
#include "magchain/manifest.hpp"
#include "magchain/newton.hpp"
#include "magchain/pivot_analysis.hpp"
#include "magchain/spring_catalog.hpp"
#include "magchain/units.hpp"
