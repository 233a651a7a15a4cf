#pragma once

#include <stdexcept>
#include <string>

namespace vgsil {

enum class Errc {
  coincident_points,
  behind_camera,
  invalid_config,
  dimension_mismatch,
  too_few_features,
  no_visible_candidates,
  single_frame_trace,
  empty_input,
  singular_system,
  zero_step,
  low_confidence,
  divergence,
  undefined_statistic,
  io,
};

const char* to_string(Errc code);

/// Single exception type for the library; `code()` tells the failure apart.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vgsil
