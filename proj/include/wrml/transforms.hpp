#ifndef WRML_TRANSFORMS_HPP
#define WRML_TRANSFORMS_HPP

#include <Eigen/Dense>
#include <string>

#include "wrml/errors.hpp"

namespace wrml {

// Pointwise maps from the latent Gaussian field x to the log-permeability m.
// Both saturating transforms produce channel-like fields; the non-monotonic
// one maps x and certain -x regions to similar m, creating distinct latent
// modes with equal data fit.
enum class TransformKind {
    Identity,     // m = x (linear test problems)
    Monotonic,    // m = tanh(4x+2) + tanh(4x-2)
    NonMonotonic, // m = 2 tanh(4x+2) + tanh(2-4x) - 1
};

TransformKind transform_from_string(const std::string& name);
std::string to_string(TransformKind kind);

double transform_forward(TransformKind kind, double x);
double transform_sensitivity(TransformKind kind, double x);

Eigen::VectorXd transform_forward(TransformKind kind, const Eigen::VectorXd& x);
// Diagonal of dm/dx at x; the full sensitivity matrix M_x is this diagonal.
Eigen::VectorXd transform_sensitivity(TransformKind kind,
                                      const Eigen::VectorXd& x);

// Permeability K = exp(m).
Eigen::VectorXd to_permeability(const Eigen::VectorXd& m);

} // namespace wrml

#endif
