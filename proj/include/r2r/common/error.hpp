#pragma once

#include <stdexcept>
#include <string>

namespace r2r {

/// Distinct failure codes for clip, manifest and checkpoint ingestion.
enum class DataErrc {
    version_mismatch,
    length_mismatch,
    malformed_header,
    malformed_body,
    invalid_argument,
    io_error,
};

const char* to_string(DataErrc code);

class DataError : public std::runtime_error {
public:
    DataError(DataErrc code, const std::string& detail);
    DataErrc code() const noexcept { return code_; }

private:
    DataErrc code_;
};

/// A NaN/Inf (or other numerically invalid state) surfaced during inference.
/// `step` is the diffusion step, `agent` the agent slot (-1 if n/a), `frame`
/// the duel frame index (-1 if n/a).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& detail, int step = -1, int agent = -1, long frame = -1);

    int step() const noexcept { return step_; }
    int agent() const noexcept { return agent_; }
    long frame() const noexcept { return frame_; }

    NumericError with_context(int agent, long frame) const;

private:
    std::string detail_;
    int step_;
    int agent_;
    long frame_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace r2r
