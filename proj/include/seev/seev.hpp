#pragma once

#include "seev/error.hpp"
#include "seev/interval.hpp"
#include "seev/linear.hpp"
#include "seev/linprog.hpp"
#include "seev/network.hpp"
#include "seev/parallel.hpp"
#include "seev/systems.hpp"
#include "seev/globalopt.hpp"
#include "seev/enumeration.hpp"
#include "seev/conditions.hpp"
#include "seev/verifier.hpp"
#include "seev/synthesis.hpp"
#include "seev/controller.hpp"

namespace seev {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace seev
