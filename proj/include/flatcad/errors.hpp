#pragma once

#include <stdexcept>
#include <string>

namespace flatcad {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gradient norm fell below eps_norm; the sample must be skipped.
struct DegenerateGradient : Error {
    DegenerateGradient() : Error("degenerate gradient (norm below eps_norm)") {}
    explicit DegenerateGradient(const std::string& what) : Error(what) {}
};

struct EmptyBatch : Error {
    EmptyBatch() : Error("empty batch") {}
    explicit EmptyBatch(const std::string& what) : Error(what) {}
};

struct EmptyCloud : Error {
    EmptyCloud() : Error("empty point cloud") {}
    explicit EmptyCloud(const std::string& what) : Error(what) {}
};

struct EmptySet : Error {
    EmptySet() : Error("empty point set") {}
    explicit EmptySet(const std::string& what) : Error(what) {}
};

struct BatchTooLarge : Error {
    BatchTooLarge() : Error("minibatch larger than population") {}
    explicit BatchTooLarge(const std::string& what) : Error(what) {}
};

struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

struct SingularPoint : Error {
    SingularPoint() : Error("query inside the shape's singular locus") {}
    explicit SingularPoint(const std::string& what) : Error(what) {}
};

struct MissingNormals : Error {
    MissingNormals() : Error("point set has no normals") {}
    explicit MissingNormals(const std::string& what) : Error(what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace flatcad
