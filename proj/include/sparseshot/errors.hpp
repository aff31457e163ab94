#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparseshot {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SPARSESHOT_ERROR(Name)                  \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

SPARSESHOT_ERROR(EmptyAnnotations);
SPARSESHOT_ERROR(InvalidPlan);
SPARSESHOT_ERROR(OutOfBounds);
SPARSESHOT_ERROR(FormatError);
SPARSESHOT_ERROR(RangeError);
SPARSESHOT_ERROR(PackingError);
SPARSESHOT_ERROR(NonFinite);
SPARSESHOT_ERROR(ShapeError);
SPARSESHOT_ERROR(InvalidConfig);
SPARSESHOT_ERROR(EmptyDataset);
SPARSESHOT_ERROR(IoError);

#undef SPARSESHOT_ERROR

/// Training produced a non-finite loss or update.
class Diverged : public Error {
public:
    Diverged(std::size_t step, const std::string& what)
        : Error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace sparseshot
