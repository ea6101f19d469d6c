// Exception types thrown by the library. Each names the condition it
// reports; messages carry the offending indices or values.
#pragma once

#include <stdexcept>
#include <string>

namespace mdflow {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mesh construction / loading.
struct DegenerateTriangle : Error { using Error::Error; };
struct ZeroAveragedNormal : Error { using Error::Error; };
struct NonManifoldEdge : Error { using Error::Error; };
struct OpenSurface : Error { using Error::Error; };
struct InconsistentOrientation : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct NonTriangleFace : Error { using Error::Error; };
struct InvalidShapeParams : Error { using Error::Error; };
struct FieldMeshMismatch : Error { using Error::Error; };

// Anisotropy.
struct InvalidDensity : Error { using Error::Error; };
struct NoStabilizerFound : Error { using Error::Error; };

// Finite elements / linear algebra.
struct SingularJacobian : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct SingularSchurComplement : Error { using Error::Error; };

// Time stepping.
struct NewtonDiverged : Error { using Error::Error; };
struct PicardDiverged : Error { using Error::Error; };
struct NonpositiveEnergy : Error { using Error::Error; };

}  // namespace mdflow
