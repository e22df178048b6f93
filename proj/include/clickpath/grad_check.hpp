#pragma once

#include <functional>
#include <span>

#include "clickpath/tape.hpp"

namespace clickpath {

/// Scalar function built on a tape; called once recording (analytic pass)
/// and repeatedly on non-recording tapes while parameters are perturbed.
using TapedScalarFn = std::function<Var(Tape&)>;

/// Largest relative disagreement between backpropagated gradients and central
/// finite differences:
///   max_i |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
///
/// Existing gradients of `params` are overwritten. Parameter values are
/// restored exactly. Throws NumericError if any evaluation is non-finite.
double grad_check(const TapedScalarFn& f, std::span<Var> params, double h = 1e-5);

}  // namespace clickpath
