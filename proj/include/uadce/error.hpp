#pragma once

#include <stdexcept>
#include <string>

namespace uadce {

// Error taxonomy used across the library. Every throw site picks the class
// that tells the caller whose fault it is:
//   Config     bad experiment/protocol/dataset configuration
//   Contract   caller violated an operation precondition
//   Evaluation inference-time failure (missing prototype, empty class, ...)
//   Policy     selection-policy table rejected (monotone constraint, budget)
//   Io         filesystem or format failure
//   Training   optimization failure (divergence, non-finite loss)
enum class Errc {
  Config = 1,
  Contract = 2,
  Evaluation = 3,
  Policy = 4,
  Io = 5,
  Training = 6,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(Errc::Config, msg); }
[[noreturn]] inline void throw_contract(const std::string& msg) { throw Error(Errc::Contract, msg); }
[[noreturn]] inline void throw_evaluation(const std::string& msg) { throw Error(Errc::Evaluation, msg); }
[[noreturn]] inline void throw_policy(const std::string& msg) { throw Error(Errc::Policy, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(Errc::Io, msg); }
[[noreturn]] inline void throw_training(const std::string& msg) { throw Error(Errc::Training, msg); }

}  // namespace uadce
