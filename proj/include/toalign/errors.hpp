#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace toalign {

// Shape or rank disagreement between tensors.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Out-of-range class / element index.
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration value.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An API precondition was violated by the caller.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed dataset content (e.g. missing label on a source sample).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File-level parse failure; message carries the line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ||w ⊙ f|| fell below the usable threshold in the feature decomposition.
struct DegenerateWeightError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace toalign
