#include "pva/detect.hpp"

#include <cmath>
#include <string>

#include "pva/error.hpp"

namespace pva {

using nn::Activation;
using nn::LayerSpec;

std::vector<LayerSpec> build_detector_arch() {
  return {
      LayerSpec::conv(1, 4, 7, 2),
      LayerSpec::conv(4, 10, 5, 2),
      LayerSpec::conv(10, 16, 5, 2),
      LayerSpec::conv(16, 20, 3, 2),
      LayerSpec::conv(20, 24, 3, 2),
      LayerSpec::fc(24 * 6, 20, Activation::ReLU),
      LayerSpec::fc(20, 2, Activation::None),
  };
}

nn::Model make_detector(std::uint64_t seed) {
  const auto arch = build_detector_arch();
  return nn::init_model(arch, seed);
}

Prediction prediction_from_probs(std::array<double, 2> probs) {
  Prediction p;
  p.probs = probs;
  const double vt = probs[static_cast<std::size_t>(Label::VTVF)];
  const double non = probs[static_cast<std::size_t>(Label::NonVTVF)];
  p.cs = std::abs(vt - non);
  p.klass = vt >= non ? Label::VTVF : Label::NonVTVF;
  return p;
}

Prediction infer_with_confidence(const nn::Model& model, std::span<const float> segment) {
  const auto logits = nn::forward(model, segment);
  if (logits.size() != 2)
    throw DimensionError("detector must emit 2 logits, got " + std::to_string(logits.size()));
  const auto p = nn::softmax_probs(logits);
  return prediction_from_probs({p[0], p[1]});
}

bool ShockEvaluator::push(Label klass) {
  if (klass != Label::VTVF) {
    run_length_ = 0;
    return false;
  }
  if (++run_length_ == kRequired) {
    run_length_ = 0;
    return true;
  }
  return false;
}

EventDecision decide_event(std::span<const Label> classes, Label truth) {
  if (classes.empty()) throw DataError("event has no segments");
  EventDecision d;
  d.truth = truth;
  ShockEvaluator ev;
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (ev.push(classes[i]) && !d.shocked) {
      d.shocked = true;
      d.shock_segment_index = i;
    }
  return d;
}

EventDecision detect_event(const nn::Model& model, std::span<const Segment> segments, Label truth) {
  if (segments.empty()) throw DataError("event has no segments");
  std::vector<Label> classes;
  classes.reserve(segments.size());
  for (const auto& s : segments) classes.push_back(infer_with_confidence(model, s.samples).klass);
  return decide_event(classes, truth);
}

std::vector<nn::Example> labeled_examples(std::span<const Segment> segments) {
  std::vector<nn::Example> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!segments[i].label)
      throw DataError("segment " + std::to_string(i) + " at t=" +
                      std::to_string(segments[i].t_start) + " s is unlabeled");
    out.push_back({segments[i].samples, static_cast<std::size_t>(*segments[i].label)});
  }
  return out;
}

}  // namespace pva
