#pragma once

#include <stdexcept>
#include <string>

namespace minusformer {

// Base for every error raised by the library. The category is a short
// module-prefixed tag ("tensor/ShapeMismatch") used by the CLI when
// reporting failures.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define MINUSFORMER_DEFINE_ERROR(Name, Module)                                   \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& message) : Error(Module "/" #Name, message) {} \
    }

// tensorcore
MINUSFORMER_DEFINE_ERROR(ShapeMismatch, "tensor");
MINUSFORMER_DEFINE_ERROR(AxisOutOfRange, "tensor");
MINUSFORMER_DEFINE_ERROR(NotScalar, "tensor");

// layers / model
MINUSFORMER_DEFINE_ERROR(InvalidRate, "layers");
MINUSFORMER_DEFINE_ERROR(InvalidConfig, "model");
MINUSFORMER_DEFINE_ERROR(ConfigNotDecomposable, "model");
MINUSFORMER_DEFINE_ERROR(CheckpointError, "model");

// data
MINUSFORMER_DEFINE_ERROR(IoError, "data");
MINUSFORMER_DEFINE_ERROR(ParseError, "data");
MINUSFORMER_DEFINE_ERROR(MissingValue, "data");
MINUSFORMER_DEFINE_ERROR(ZeroVariance, "data");
MINUSFORMER_DEFINE_ERROR(RangeTooShort, "data");
MINUSFORMER_DEFINE_ERROR(EmptySplit, "data");

// metrics
MINUSFORMER_DEFINE_ERROR(DivisionDomain, "metrics");
MINUSFORMER_DEFINE_ERROR(ZeroDenominator, "metrics");
MINUSFORMER_DEFINE_ERROR(SeriesTooShort, "metrics");
MINUSFORMER_DEFINE_ERROR(InvalidQuantile, "metrics");

// ensemblesim
MINUSFORMER_DEFINE_ERROR(NotPSD, "ensemblesim");
MINUSFORMER_DEFINE_ERROR(OddL, "ensemblesim");

// cli
MINUSFORMER_DEFINE_ERROR(UnknownFlag, "cli");
MINUSFORMER_DEFINE_ERROR(MissingConfig, "cli");
MINUSFORMER_DEFINE_ERROR(InvalidValue, "cli");

#undef MINUSFORMER_DEFINE_ERROR

}  // namespace minusformer
