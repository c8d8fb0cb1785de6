#pragma once

#include <stdexcept>
#include <string>

namespace egmcts {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define EGMCTS_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  };

// problem-core
EGMCTS_DEFINE_ERROR(InvalidItem)
EGMCTS_DEFINE_ERROR(InvalidAction)
EGMCTS_DEFINE_ERROR(LengthMismatch)
EGMCTS_DEFINE_ERROR(OracleUnavailable)
EGMCTS_DEFINE_ERROR(OracleRequestFailed)
EGMCTS_DEFINE_ERROR(DomainError)
EGMCTS_DEFINE_ERROR(GenerationExhausted)
// search tree / planning
EGMCTS_DEFINE_ERROR(AlreadyExpanded)
EGMCTS_DEFINE_ERROR(NoSelectableLeaf)
EGMCTS_DEFINE_ERROR(InvalidParams)
// network
EGMCTS_DEFINE_ERROR(DimensionMismatch)
EGMCTS_DEFINE_ERROR(EmptyBatch)
EGMCTS_DEFINE_ERROR(EmptyDataset)
EGMCTS_DEFINE_ERROR(WeightsFormatError)
// routes and metrics
EGMCTS_DEFINE_ERROR(NotSolved)
EGMCTS_DEFINE_ERROR(InconsistentTree)
EGMCTS_DEFINE_ERROR(EmptyRoute)
EGMCTS_DEFINE_ERROR(MismatchedTargets)
EGMCTS_DEFINE_ERROR(EmptySet)
// datasets
EGMCTS_DEFINE_ERROR(UnknownNode)
EGMCTS_DEFINE_ERROR(ConfigError)

#undef EGMCTS_DEFINE_ERROR

}  // namespace egmcts
