#include "avil/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace avil::nn {
namespace {

double project(const Tensor64& out, const Tensor64& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

double evaluate(const GradCheckFn& fn, const std::vector<Tensor64>& inputs, const Tensor64& weights) {
  Tape64 tape;
  std::vector<Var> vars;
  for (const auto& in : inputs) vars.push_back(tape.leaf(in, false));
  return project(tape.value(fn(tape, vars)), weights);
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Tensor64>& inputs, std::uint64_t seed,
                           double h, double floor) {
  Tape64 tape;
  std::vector<Var> vars;
  for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
  const Var out = fn(tape, vars);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Tensor64 weights(tape.value(out).shape());
  for (auto& w : weights.data()) w = uniform(rng);
  tape.backward(out, weights);

  GradCheckReport report;
  std::vector<Tensor64> probe = inputs;
  const double base = evaluate(fn, probe, weights);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const bool has = tape.has_grad(vars[k]);
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double analytic = has ? tape.grad(vars[k])[i] : 0.0;
      const double x = probe[k][i];
      probe[k][i] = x + h;
      const double up = evaluate(fn, probe, weights);
      probe[k][i] = x - h;
      const double down = evaluate(fn, probe, weights);
      probe[k][i] = x;

      const double right = (up - base) / h;
      const double left = (base - down) / h;
      if (std::abs(right - left) > 1e-4 * std::max(std::abs(right), std::abs(left)) + 1e-7) {
        ++report.skipped_nondifferentiable;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace avil::nn
