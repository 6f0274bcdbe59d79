#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scenegen {

enum class Errc {
  missing_section,
  malformed_tuple,
  empty_layout,
  no_dictionary_found,
  inconsistent_names,
  degenerate_box,
  shape_mismatch,
  bad_timestep_order,
  non_finite_state,
  non_finite_gradient,
  zero_vector,
  transport_error,
  quota_or_auth_error,
  unparsable_after_retries,
  precondition,
  backend_error,
  validation_error,
  empty_batch,
  config_error,
  io_error,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::missing_section: return "MissingSection";
    case Errc::malformed_tuple: return "MalformedTuple";
    case Errc::empty_layout: return "EmptyLayout";
    case Errc::no_dictionary_found: return "NoDictionaryFound";
    case Errc::inconsistent_names: return "InconsistentNames";
    case Errc::degenerate_box: return "DegenerateBox";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::bad_timestep_order: return "BadTimestepOrder";
    case Errc::non_finite_state: return "NonFiniteState";
    case Errc::non_finite_gradient: return "NonFiniteGradient";
    case Errc::zero_vector: return "ZeroVector";
    case Errc::transport_error: return "TransportError";
    case Errc::quota_or_auth_error: return "QuotaOrAuthError";
    case Errc::unparsable_after_retries: return "UnparsableAfterRetries";
    case Errc::precondition: return "PreconditionViolation";
    case Errc::backend_error: return "BackendError";
    case Errc::validation_error: return "ValidationError";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

// Every failure in the library surfaces as an Error carrying a stable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by the samplers; carries the timestep at which the state blew up.
class NonFiniteStateError : public Error {
 public:
  explicit NonFiniteStateError(int timestep)
      : Error(Errc::non_finite_state, "non-finite sampler state at timestep " + std::to_string(timestep)),
        timestep_(timestep) {}

  int timestep() const noexcept { return timestep_; }

 private:
  int timestep_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace scenegen
