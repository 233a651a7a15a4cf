#include "vgsil/error.hpp"

namespace vgsil {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::coincident_points: return "coincident points";
    case Errc::behind_camera: return "point behind camera";
    case Errc::invalid_config: return "invalid config";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::too_few_features: return "too few features";
    case Errc::no_visible_candidates: return "no visible candidates";
    case Errc::single_frame_trace: return "single-frame trace";
    case Errc::empty_input: return "empty input";
    case Errc::singular_system: return "singular system";
    case Errc::zero_step: return "zero step";
    case Errc::low_confidence: return "low-confidence inference";
    case Errc::divergence: return "divergence";
    case Errc::undefined_statistic: return "undefined statistic";
    case Errc::io: return "i/o";
  }
  return "unknown";
}

}  // namespace vgsil
