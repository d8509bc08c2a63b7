#pragma once

#include "ecmech/best_response.hpp"
#include "ecmech/central_mechanism.hpp"
#include "ecmech/dist_mechanism.hpp"
#include "ecmech/dual.hpp"
#include "ecmech/error.hpp"
#include "ecmech/instance.hpp"
#include "ecmech/learning.hpp"
#include "ecmech/messages.hpp"
#include "ecmech/oracle.hpp"
#include "ecmech/price_set.hpp"
#include "ecmech/qp.hpp"
#include "ecmech/scenario.hpp"
#include "ecmech/tree.hpp"
#include "ecmech/utility.hpp"
