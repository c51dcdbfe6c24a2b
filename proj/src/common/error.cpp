#include "r2r/common/error.hpp"

#include <sstream>

namespace r2r {

const char* to_string(DataErrc code) {
    switch (code) {
        case DataErrc::version_mismatch: return "version_mismatch";
        case DataErrc::length_mismatch: return "length_mismatch";
        case DataErrc::malformed_header: return "malformed_header";
        case DataErrc::malformed_body: return "malformed_body";
        case DataErrc::invalid_argument: return "invalid_argument";
        case DataErrc::io_error: return "io_error";
    }
    return "unknown";
}

DataError::DataError(DataErrc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

namespace {

std::string numeric_message(const std::string& detail, int step, int agent, long frame) {
    std::ostringstream os;
    os << "numeric failure: " << detail;
    if (step >= 0) os << " (diffusion step " << step << ")";
    if (agent >= 0) os << " (agent " << agent << ")";
    if (frame >= 0) os << " (frame " << frame << ")";
    return os.str();
}

}  // namespace

NumericError::NumericError(const std::string& detail, int step, int agent, long frame)
    : std::runtime_error(numeric_message(detail, step, agent, frame)),
      detail_(detail),
      step_(step),
      agent_(agent),
      frame_(frame) {}

NumericError NumericError::with_context(int agent, long frame) const {
    return NumericError(detail_, step_, agent, frame);
}

}  // namespace r2r
