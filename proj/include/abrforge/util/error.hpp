#pragma once

#include <stdexcept>
#include <string>

namespace abrforge {

// Base for errors caused by invalid input or configuration.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failures of the machinery itself (I/O, replay store misses, transport).
// Campaigns abort on these; candidate faults never raise this type.
class InfrastructureError : public Error {
public:
    using Error::Error;
};

}  // namespace abrforge
