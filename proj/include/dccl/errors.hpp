#pragma once

#include <stdexcept>
#include <string>

namespace dccl {

// Base class for all library errors. `category()` is a stable, machine-readable
// tag (dotted lowercase) used by the CLI when mapping failures to exit output.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct SingularTransform : Error {
    explicit SingularTransform(const std::string& msg)
        : Error("affine.singular_transform", msg) {}
};

struct DegenerateCrop : Error {
    explicit DegenerateCrop(const std::string& msg)
        : Error("augment.degenerate_crop", msg) {}
};

struct InvalidSpec : Error {
    explicit InvalidSpec(const std::string& msg)
        : Error("phantom.invalid_spec", msg) {}
};

struct EmptyIntersection : Error {
    explicit EmptyIntersection(const std::string& msg)
        : Error("sampler.empty_intersection", msg) {}
};

struct NoForegroundAnchors : Error {
    explicit NoForegroundAnchors(const std::string& msg)
        : Error("loss.no_foreground_anchors", msg) {}
};

struct NonFiniteGradient : Error {
    explicit NonFiniteGradient(const std::string& msg)
        : Error("train.non_finite_gradient", msg) {}
};

struct TooFewPoints : Error {
    explicit TooFewPoints(const std::string& msg)
        : Error("latent.too_few_points", msg) {}
};

struct SingleClass : Error {
    explicit SingleClass(const std::string& msg)
        : Error("latent.single_class", msg) {}
};

struct CollinearPoints : Error {
    explicit CollinearPoints(const std::string& msg)
        : Error("chromap.collinear_points", msg) {}
};

struct EmptySurface : Error {
    explicit EmptySurface(const std::string& msg)
        : Error("seg.empty_surface", msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg)
        : Error("tensor.shape_mismatch", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg)
        : Error("io.failure", msg) {}
};

struct ConfigError : Error {
    ConfigError(std::string category, const std::string& msg)
        : Error(std::move(category), msg) {}
};

inline void require(bool cond, const char* category, const std::string& msg) {
    if (!cond) throw Error(category, msg);
}

}  // namespace dccl
