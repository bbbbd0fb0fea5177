#include "wrml/transforms.hpp"

#include <cmath>

namespace wrml {

TransformKind transform_from_string(const std::string& name) {
    if (name == "identity") return TransformKind::Identity;
    if (name == "monotonic") return TransformKind::Monotonic;
    if (name == "non-monotonic") return TransformKind::NonMonotonic;
    throw ConfigError("unknown transform: " + name);
}

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::Identity: return "identity";
        case TransformKind::Monotonic: return "monotonic";
        case TransformKind::NonMonotonic: return "non-monotonic";
    }
    return "?";
}

double transform_forward(TransformKind kind, double x) {
    switch (kind) {
        case TransformKind::Identity:
            return x;
        case TransformKind::Monotonic:
            return std::tanh(4.0 * x + 2.0) + std::tanh(4.0 * x - 2.0);
        case TransformKind::NonMonotonic:
            return 2.0 * std::tanh(4.0 * x + 2.0) + std::tanh(2.0 - 4.0 * x) - 1.0;
    }
    return 0.0;
}

double transform_sensitivity(TransformKind kind, double x) {
    switch (kind) {
        case TransformKind::Identity:
            return 1.0;
        case TransformKind::Monotonic: {
            const double a = std::tanh(4.0 * x + 2.0);
            const double b = std::tanh(4.0 * x - 2.0);
            return 8.0 - 4.0 * a * a - 4.0 * b * b;
        }
        case TransformKind::NonMonotonic: {
            const double a = std::tanh(4.0 * x + 2.0);
            const double b = std::tanh(2.0 - 4.0 * x);
            return 4.0 - 8.0 * a * a + 4.0 * b * b;
        }
    }
    return 0.0;
}

Eigen::VectorXd transform_forward(TransformKind kind, const Eigen::VectorXd& x) {
    Eigen::VectorXd m(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k)
        m[k] = transform_forward(kind, x[k]);
    return m;
}

Eigen::VectorXd transform_sensitivity(TransformKind kind,
                                      const Eigen::VectorXd& x) {
    Eigen::VectorXd d(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k)
        d[k] = transform_sensitivity(kind, x[k]);
    return d;
}

Eigen::VectorXd to_permeability(const Eigen::VectorXd& m) {
    return m.array().exp().matrix();
}

} // namespace wrml
