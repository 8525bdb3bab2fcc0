#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"

namespace aid {

template <typename Real>
GradcheckReport gradcheck(const std::function<Tensor<Real>()>& f, std::vector<Tensor<Real>> params,
                          Real h, Real tol, int max_coords_per_param, uint64_t sample_seed) {
  AID_CHECK(!params.empty(), "gradcheck: no parameters");
  for (auto& p : params) {
    AID_CHECK(p.requires_grad(), "gradcheck: all parameters must require grad");
    p.zero_grad();
  }

  Real v0 = f().item();
  Real v1 = f().item();
  AID_CHECK(v0 == v1, "gradcheck: f is not deterministic (freeze dropout / RNG first)");

  Tensor<Real> loss = f();
  loss.backward();
  std::vector<std::vector<Real>> analytic(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    AID_CHECK(params[i].has_grad(), "gradcheck: parameter " + std::to_string(i) +
                                        " received no gradient from f");
    auto g = params[i].grad();
    analytic[i].assign(g.begin(), g.end());
  }

  GradcheckReport report;
  Rng rng(sample_seed ^ 0xa1dc4ec4ull);
  for (size_t i = 0; i < params.size(); ++i) {
    auto val = params[i].raw_data();
    std::vector<int64_t> coords;
    int64_t n = static_cast<int64_t>(val.size());
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      Rng r = rng.fork(i);
      for (int k = 0; k < max_coords_per_param; ++k) coords.push_back(r.uniform_int(n));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t k = 0; k < n; ++k) coords[static_cast<size_t>(k)] = k;
    }
    for (int64_t c : coords) {
      Real orig = val[static_cast<size_t>(c)];
      val[static_cast<size_t>(c)] = orig + h;
      Real fp = f().item();
      val[static_cast<size_t>(c)] = orig - h;
      Real fm = f().item();
      val[static_cast<size_t>(c)] = orig;
      double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * h);
      double a = analytic[i][static_cast<size_t>(c)];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "param " + std::to_string(i) + " coord " + std::to_string(c) +
                       " analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

template GradcheckReport gradcheck(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>,
                                   float, float, int, uint64_t);
template GradcheckReport gradcheck(const std::function<Tensor<double>()>&,
                                   std::vector<Tensor<double>>, double, double, int, uint64_t);

}  // namespace aid
