#ifndef GWCOSAL_ERROR_HPP
#define GWCOSAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gwcosal {

// Shape or argument violations detected before any computation runs.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed configuration, manifest, or file-format violations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable, corrupt, or unwritable files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training; carries the iteration when known.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gwcosal

#endif
