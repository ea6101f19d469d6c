// Small shared aliases and numeric helpers used across the library.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace mdflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index = std::int64_t;

// Nodal fields are indexed by vertex id, element fields by triangle id.
using ScalarField = std::vector<double>;
using VectorField = std::vector<Vec3>;

// Compensated (Kahan) accumulator. Reductions that feed conservation
// diagnostics sum through this in a fixed order so results are
// bit-deterministic and carry no O(n) cancellation error.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

// Sums a buffer in index order with compensation. The parallel kernels fill
// per-element buffers concurrently and reduce here, which keeps the result
// identical to the serial reference path.
inline double ordered_sum(const std::vector<double>& buf) {
    KahanSum acc;
    for (double x : buf) acc.add(x);
    return acc.value();
}

// Prints a double with 17 significant digits so values round-trip exactly.
std::string format_full(double x);

}  // namespace mdflow
