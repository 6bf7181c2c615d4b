#pragma once

#include "ppl/checkpoint.hpp"
#include "ppl/detector.hpp"

namespace ppl {

// Classification seam used by evaluation and attribution, so analyses run
// against any model (including test stubs). Implementations must be safe
// to call concurrently on a const instance.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const Image& image) const = 0;
};

class DetectorPredictor : public Predictor {
 public:
  explicit DetectorPredictor(DetectorParams params)
      : params_(std::move(params)) {}
  explicit DetectorPredictor(const std::filesystem::path& checkpoint)
      : params_(load_checkpoint(checkpoint)) {}

  Prediction predict(const Image& image) const override {
    return ppl::predict(params_, image);
  }

  const DetectorParams& params() const { return params_; }

 private:
  DetectorParams params_;
};

}  // namespace ppl
