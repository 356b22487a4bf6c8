#pragma once

#include <stdexcept>
#include <string>

namespace cdiff {

// Base class for all library failures.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Incompatible operand shapes.
class shape_error : public error {
public:
    using error::error;
};

// NaN/Inf detected, or a numeric argument outside its domain.
class numeric_error : public error {
public:
    using error::error;
};

// File format and serialization failures, tagged with a machine-checkable code.
class io_error : public error {
public:
    enum class code {
        open_failed,
        bad_magic,
        bad_dtype,
        bad_header,
        truncated,
        write_failed,
    };

    io_error(code c, const std::string& what_arg) : error(what_arg), code_(c) {}
    code kind() const noexcept { return code_; }

private:
    code code_;
};

// Invalid run configuration: unknown key, malformed value, missing file.
class config_error : public error {
public:
    using error::error;
};

// Boundary metrics requested on an empty mask. Distinct from numeric_error so
// callers can count skipped images instead of treating them as failures.
class empty_mask_error : public error {
public:
    using error::error;
};

// Training diverged (non-finite loss or gradient).
class training_error : public error {
public:
    using error::error;
};

} // namespace cdiff
