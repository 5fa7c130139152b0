#pragma once

#include <stdexcept>
#include <string>

namespace dto {

// Base class for all recoverable errors raised by the library. The CLI maps
// the `category()` of an uncaught error to its exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kUsage, kData, kRuntime };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  Category category() const { return category_; }

 private:
  Category category_;
};

#define DTO_DEFINE_ERROR(Name, Cat)                                          \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(Category::Cat, what) {} \
  }

// story_data
DTO_DEFINE_ERROR(MissingField, kData);
DTO_DEFINE_ERROR(EmptyField, kData);
DTO_DEFINE_ERROR(TokenizerUnknownSymbol, kData);
DTO_DEFINE_ERROR(ParseError, kData);

// metrics
DTO_DEFINE_ERROR(EmptyHypothesis, kData);
DTO_DEFINE_ERROR(SourceTooLong, kData);
DTO_DEFINE_ERROR(AlignmentError, kData);
DTO_DEFINE_ERROR(LengthMismatch, kData);

// soft bridge / models
DTO_DEFINE_ERROR(DimensionMismatch, kData);
DTO_DEFINE_ERROR(NonPositiveTemperature, kUsage);
DTO_DEFINE_ERROR(NoUnknownToken, kData);
DTO_DEFINE_ERROR(ContextOverflow, kData);
DTO_DEFINE_ERROR(EmptyTarget, kData);

// trainer / checkpoints
DTO_DEFINE_ERROR(DivergenceDetected, kRuntime);
DTO_DEFINE_ERROR(VersionMismatch, kData);
DTO_DEFINE_ERROR(CorruptArchive, kData);
DTO_DEFINE_ERROR(PreconditionViolation, kUsage);

// llm baselines
DTO_DEFINE_ERROR(MissingExemplar, kUsage);
DTO_DEFINE_ERROR(ProviderError, kRuntime);
DTO_DEFINE_ERROR(TransientProviderError, kRuntime);

// configuration
DTO_DEFINE_ERROR(ConfigError, kUsage);

#undef DTO_DEFINE_ERROR

}  // namespace dto
