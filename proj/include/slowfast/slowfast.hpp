#pragma once

#include "slowfast/collocation.hpp"
#include "slowfast/differencing.hpp"
#include "slowfast/error.hpp"
#include "slowfast/models.hpp"
#include "slowfast/ode.hpp"
#include "slowfast/reduced_flow.hpp"
#include "slowfast/so.hpp"
#include "slowfast/sof.hpp"
#include "slowfast/spectral.hpp"
#include "slowfast/system.hpp"
#include "slowfast/transient.hpp"
#include "slowfast/types.hpp"
