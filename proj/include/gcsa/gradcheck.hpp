#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gcsa/tape.hpp"

namespace gcsa {

template <typename T>
struct GradCheckEntry {
  std::string name;
  T max_rel_err = 0;
  T max_abs_err = 0;
};

template <typename T>
struct GradCheckReport {
  std::vector<GradCheckEntry<T>> params;
  T max_rel_err = 0;
  bool passes(T threshold) const { return max_rel_err < threshold; }
};

// Named view onto a parameter tensor to be probed.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
};

// Compares analytic tape gradients of a scalar closure against central finite
// differences. `build` receives a fresh tape plus one leaf node per parameter
// (in the order given) and must return a scalar loss node built from them.
// Relative error is per entry, normalized by max(1, |analytic|_inf, |fd|_inf)
// over the parameter tensor.
template <typename T, typename BuildFn>
GradCheckReport<T> gradcheck(BuildFn&& build, const std::vector<ParamRef<T>>& params, T step) {
  GradCheckReport<T> report;

  // One forward (optionally with backward); returns loss, fills analytic
  // parameter gradients when requested.
  auto eval = [&](std::vector<Tensor<T>>* grads_out) -> T {
    Tape<T> tape;
    std::vector<typename Tape<T>::Node> nodes;
    nodes.reserve(params.size());
    for (const auto& p : params) nodes.push_back(tape.leaf(*p.tensor));
    auto loss = build(tape, nodes);
    T v = tape.value(loss).at(0, 0);
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError("gradcheck: non-finite loss");
    if (grads_out) {
      tape.backward(loss);
      grads_out->clear();
      for (auto n : nodes) grads_out->push_back(tape.grad(n));
    }
    return v;
  };

  std::vector<Tensor<T>> analytic_grads;
  eval(&analytic_grads);

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& p = *params[pi].tensor;
    const Tensor<T>& analytic = analytic_grads[pi];
    Tensor<T> fd(p.rows, p.cols);
    for (size_t i = 0; i < p.size(); ++i) {
      T orig = p.data[i];
      p.data[i] = orig + step;
      T up = eval(nullptr);
      p.data[i] = orig - step;
      T down = eval(nullptr);
      p.data[i] = orig;
      fd.data[i] = (up - down) / (2 * step);
    }
    T scale = T(1);
    for (size_t i = 0; i < p.size(); ++i) {
      scale = std::max(scale, std::abs(analytic.data[i]));
      scale = std::max(scale, std::abs(fd.data[i]));
    }
    GradCheckEntry<T> entry;
    entry.name = params[pi].name;
    for (size_t i = 0; i < p.size(); ++i) {
      T abs_err = std::abs(analytic.data[i] - fd.data[i]);
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, abs_err / scale);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace gcsa
