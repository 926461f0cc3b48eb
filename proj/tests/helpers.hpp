#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "groundloom/model.hpp"
#include "groundloom/rng.hpp"

namespace testutil {

using groundloom::Mat;
using groundloom::TokenSeq;

// Token-level Levenshtein distance (substitutions, insertions, deletions).
inline int edit_distance(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct FdReport {
  int checked = 0;
  int failed = 0;
  double max_rel_err = 0;
};

// Central-difference oracle: probes n random parameter coordinates of an
// arbitrary scalar objective and compares against the analytic gradient.
// Deliberately independent of the backward pass it certifies.
template <typename Objective>
FdReport fd_check(groundloom::model::Params& params, const groundloom::model::Grads& analytic,
                  Objective objective, int n_coords, std::uint64_t seed, double step = 1e-5,
                  double tol = 1e-4) {
  std::vector<Mat*> param_tensors;
  std::vector<const Mat*> grad_tensors;
  groundloom::model::for_each_tensor(params,
                                     [&](std::string_view, Mat& m) { param_tensors.push_back(&m); });
  groundloom::model::for_each_tensor(
      const_cast<groundloom::model::Grads&>(analytic),
      [&](std::string_view, Mat& m) { grad_tensors.push_back(&m); });

  std::size_t total = 0;
  for (const Mat* m : param_tensors) total += static_cast<std::size_t>(m->size());

  groundloom::Rng rng(seed);
  FdReport rep;
  for (int i = 0; i < n_coords; ++i) {
    const std::size_t flat = rng.next_u64() % total;
    std::size_t off = flat;
    std::size_t ti = 0;
    while (off >= static_cast<std::size_t>(param_tensors[ti]->size())) {
      off -= static_cast<std::size_t>(param_tensors[ti]->size());
      ++ti;
    }
    double* coord = param_tensors[ti]->data() + off;
    const double orig = *coord;
    *coord = orig + step;
    const double fplus = objective(params);
    *coord = orig - step;
    const double fminus = objective(params);
    *coord = orig;

    const double fd = (fplus - fminus) / (2.0 * step);
    const double an = grad_tensors[ti]->data()[off];
    const double denom = std::max(std::abs(an), std::abs(fd));
    ++rep.checked;
    if (denom < 1e-5) continue;  // both effectively zero
    const double rel = std::abs(an - fd) / denom;
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    if (rel > tol) ++rep.failed;
  }
  return rep;
}

// Scratch directory per test binary run.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("groundloom_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
