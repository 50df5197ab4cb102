#pragma once

#include <stdexcept>
#include <string>

namespace featgeo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyData : public Error { public: using Error::Error; };
class BadSample : public Error { public: using Error::Error; };
class BadDistribution : public Error { public: using Error::Error; };
class DegenerateMarginal : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class UnsupportedProjection : public Error { public: using Error::Error; };
class RankError : public Error { public: using Error::Error; };
class NotReconstructible : public Error { public: using Error::Error; };
class BadWeights : public Error { public: using Error::Error; };
class BadOracle : public Error { public: using Error::Error; };
class TooFewSamples : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class MissingOperator : public Error { public: using Error::Error; };
class GraphError : public Error { public: using Error::Error; };
class TrainingDiverged : public Error { public: using Error::Error; };
class DegenerateFeature : public Error { public: using Error::Error; };
class NearSingularDenominator : public Error { public: using Error::Error; };

}  // namespace featgeo
