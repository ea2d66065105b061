// Shared fixtures for the unit tests: the dispersal matrices and growth laws
// the numeric anchors were frozen on, plus a generator of random valid models
// for property tests.
#pragma once

#include <initializer_list>
#include <memory>
#include <random>
#include <vector>

#include "patchhopf/model.hpp"

namespace testing {

using patchhopf::DispersionMatrix;
using patchhopf::Logistic;
using patchhopf::Mat;
using patchhopf::ModelConfig;
using patchhopf::Vec;

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// 4-patch network with mild asymmetry; columns 1 and 4 lose mass in transit.
inline Mat mat4_main() {
  Mat A(4, 4);
  A << -1, 0.2, 0.5, 0.6,
       0.5, -1.2, 0.2, 0.1,
       0, 0.1, -0.9, 0.1,
       0, 0.1, 0.2, -1.2;
  return A;
}

// Same as mat4_main except a_11 = -2: patch 1 sheds much more mass.
inline Mat mat4_alt() {
  Mat A(4, 4);
  A << -2, 0.2, 0.5, 0,
       0.5, -1.2, 0.2, 0.1,
       0, 0.1, -0.9, 0.1,
       0, 0.1, 0.2, -1.2;
  return A;
}

inline Vec m4() { return vec({7.5, 7.0, 6.5, 6.0}); }

// 2-patch cycles used for the topology-index anchors: a gentle one and one
// with a strongly lossy first patch.
inline Mat mat2_cyc() {
  Mat A(2, 2);
  A << -2, 1, 0.9, -1;
  return A;
}

inline Mat mat2_steep() {
  Mat A(2, 2);
  A << -20, 1, 15, -1;
  return A;
}

inline Vec m2() { return vec({1.0, 2.0}); }

// 3-patch chain with loss on every column.
inline Mat mat3_chain() {
  Mat A(3, 3);
  A << -2, 1, 0,
       1, -2, 0.5,
       0.5, 0.5, -1.5;
  return A;
}

inline Vec m3() { return vec({1.0, 1.5, 2.0}); }

// Pure-delay logistic law: f_j = m_j - y.
inline std::shared_ptr<const Logistic> pure_delay(const Vec& m) {
  return std::make_shared<Logistic>(m, Vec::Zero(m.size()),
                                    Vec::Ones(m.size()));
}

inline ModelConfig model_of(const Mat& A, const Vec& m) {
  return ModelConfig(DispersionMatrix(A), pure_delay(m));
}

// Symmetric 2-patch pure-delay model with unit rates. Everything about it is
// known in closed form: d* = 1, u^d = (1-d, 1-d), tau_0(d) = pi/(2(1-d)).
inline ModelConfig sym_twopatch() {
  Mat A(2, 2);
  A << -2, 1, 1, -2;
  return model_of(A, vec({1.0, 1.0}));
}

// Random dispersal matrix satisfying the structural hypotheses: a directed
// cycle guarantees irreducibility, extra edges are sprinkled on top, and the
// diagonal absorbs the column sums plus a positive loss term (at least one
// patch always loses mass).
inline Mat random_dispersal(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> edge(0.2, 1.5);
  std::uniform_real_distribution<double> extra(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> loss(0.0, 0.5);
  Mat A = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) A((j + 1) % n, j) = edge(rng);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (j != k && A(j, k) == 0.0 && coin(rng) < 0.4) A(j, k) = extra(rng);
  for (int k = 0; k < n; ++k) {
    double out = A.col(k).sum();
    double lk = loss(rng);
    if (k == 0) lk = std::max(lk, 0.1);
    A(k, k) = -out - lk;
  }
  return A;
}

inline Vec random_rates(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> rate(0.5, 8.0);
  Vec m(n);
  for (int j = 0; j < n; ++j) m[j] = rate(rng);
  return m;
}

}  // namespace testing
