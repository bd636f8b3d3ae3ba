#include "latad/parameters.hpp"

#include <cmath>

#include <fmt/format.h>

namespace latad {

std::size_t ParameterSet::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw ConfigError(fmt::format("duplicate parameter '{}'", name));
  const std::size_t slot = values_.size();
  index_.emplace(name, slot);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return slot;
}

std::size_t ParameterSet::slot(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::vector<Matrix> ParameterSet::zero_gradients() const {
  std::vector<Matrix> grads;
  grads.reserve(values_.size());
  for (const auto& v : values_) grads.push_back(Matrix::Zero(v.rows(), v.cols()));
  return grads;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Matrix& a = values_[i];
    const Matrix& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (!(a.array() == b.array()).all()) return false;
  }
  return true;
}

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill row by row so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Adam::Adam(const ParameterSet& params, AdamOptions options)
    : options_(options), first_moment_(params.zero_gradients()), second_moment_(params.zero_gradients()) {}

double Adam::step(ParameterSet& params, std::vector<Matrix>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (options_.clip_norm > 0.0 && norm > options_.clip_norm) {
    const double factor = options_.clip_norm / norm;
    for (auto& g : grads) g *= factor;
  }
  ++step_;
  const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    first_moment_[i] = options_.beta1 * first_moment_[i] + (1.0 - options_.beta1) * grads[i];
    second_moment_[i] =
        options_.beta2 * second_moment_[i] + (1.0 - options_.beta2) * grads[i].cwiseAbs2();
    const auto m_hat = first_moment_[i].array() / bias1;
    const auto v_hat = second_moment_[i].array() / bias2;
    params.value(i).array() -= options_.learning_rate * m_hat / (v_hat.sqrt() + options_.epsilon);
  }
  return norm;
}

}  // namespace latad
