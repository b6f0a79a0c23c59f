#pragma once

// Quad precision scalar for order studies. Requires libquadmath and GNU
// extensions (-std=gnu++20).

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

namespace slowfast {

using quad = boost::multiprecision::float128;

}  // namespace slowfast
