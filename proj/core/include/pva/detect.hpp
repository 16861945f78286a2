#pragma once

// Detector architecture, confidence-scored inference and the shock evaluator
// that fires on four consecutive VT/VF segments.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pva/rhythm.hpp"
#include "pva/tinynn.hpp"

namespace pva {

// input 1x250 -> 5 conv (stride 2) -> FC 144->20 -> FC 20->2.
std::vector<nn::LayerSpec> build_detector_arch();
nn::Model make_detector(std::uint64_t seed);

struct Prediction {
  Label klass = Label::VTVF;
  double cs = 0.0;  // |P(VTVF) - P(NonVTVF)|
  std::array<double, 2> probs{0.5, 0.5};  // indexed by Label
};

// Confidence score and class from a probability pair; ties resolve to VTVF.
Prediction prediction_from_probs(std::array<double, 2> probs);
Prediction infer_with_confidence(const nn::Model& model, std::span<const float> segment);

class ShockEvaluator {
 public:
  static constexpr std::size_t kRequired = 4;

  // Returns true when this push completes a run of kRequired VT/VF
  // predictions; the run then restarts from zero.
  bool push(Label klass);
  void reset() { run_length_ = 0; }
  std::size_t run_length() const { return run_length_; }

 private:
  std::size_t run_length_ = 0;
};

struct EventDecision {
  bool shocked = false;
  std::optional<std::size_t> shock_segment_index;
  Label truth = Label::NonVTVF;
};

// Feeds per-segment classes through a fresh evaluator.
EventDecision decide_event(std::span<const Label> classes, Label truth);
EventDecision detect_event(const nn::Model& model, std::span<const Segment> segments, Label truth);

// Labeled examples over segments; throws DataError on an unlabeled segment.
std::vector<nn::Example> labeled_examples(std::span<const Segment> segments);

}  // namespace pva
