#pragma once

#include "entangle/common.hpp"

#include <string>

namespace entangle {

/// Scalar activation g together with its first three derivatives.
///
/// `Identity` is the linear surrogate: g'' = g''' = 0, so every Hessian of a
/// network built from it vanishes. It exists for tests of the degenerate case.
enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

double activate(Activation a, double z);
double activate_d1(Activation a, double z);
double activate_d2(Activation a, double z);
double activate_d3(Activation a, double z);

/// Componentwise versions on arrays of pre-activations.
Mat activate(Activation a, const Mat& z);
Mat activate_d1(Activation a, const Mat& z);
Mat activate_d2(Activation a, const Mat& z);

/// Analytic value of max_{k in 1..3} sup |g^(k)| (2 for tanh, 1 for identity).
double derivative_bound(Activation a);

}  // namespace entangle
