#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "latad/autodiff.hpp"
#include "latad/common.hpp"

namespace latad {

/// Named, ordered collection of trainable tensors. Names are slash-separated
/// submodule paths such as "extractor/gat/attention".
class ParameterSet {
 public:
  /// Registers a tensor and returns its slot. Names must be unique.
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  std::size_t slot(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::string& name(std::size_t slot) const { return names_[slot]; }
  const Matrix& value(std::size_t slot) const { return values_[slot]; }
  Matrix& value(std::size_t slot) { return values_[slot]; }
  const Matrix& value(std::string_view name) const { return values_[slot(name)]; }
  Matrix& value(std::string_view name) { return values_[slot(name)]; }

  /// Leaf Var on the tape backed by this set's storage.
  ad::Var var(ad::Tape& tape, std::size_t slot) const { return tape.parameter(values_[slot], slot); }

  /// Zero-filled gradient buffers matching every slot's shape.
  std::vector<Matrix> zero_gradients() const;
  std::size_t total_elements() const;
  bool all_finite() const;

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; non-positive disables clipping.
  double clip_norm = 5.0;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions options);

  /// Applies one update in place. Returns the pre-clip global gradient norm.
  double step(ParameterSet& params, std::vector<Matrix>& grads);
  long steps_taken() const { return step_; }

 private:
  AdamOptions options_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  long step_ = 0;
};

}  // namespace latad
