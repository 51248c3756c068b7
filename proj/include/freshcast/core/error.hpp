#pragma once

#include <stdexcept>
#include <string>

namespace freshcast {

// Root of every error the library throws. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class EmptyDatasetError : public Error { using Error::Error; };
class ImageError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class RegistryError : public Error { using Error::Error; };
class WeightsUnavailableError : public Error { using Error::Error; };
class ConstructionError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class EvaluationError : public Error { using Error::Error; };
class PairingError : public Error { using Error::Error; };
class SamplingError : public Error { using Error::Error; };
class TimeoutError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };

}  // namespace freshcast
