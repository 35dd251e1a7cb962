#pragma once

#include <stdexcept>
#include <string>

namespace alloflow {

// Malformed or unknown configuration input (CLI exit code 1).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt, truncated or wrong-format artifact files (datasets, checkpoints).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace alloflow
