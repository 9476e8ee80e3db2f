#include "trajcluster/tensor.hpp"

namespace trajcluster {

namespace {
void check_inner(int a, int b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": inner dimensions disagree (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
}
}  // namespace

void matmul_nn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
  check_inner(a.cols(), b.rows(), "matmul_nn");
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Tensor(a.rows(), b.cols());
  else if (!accumulate) out.fill(0.0);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* crow = pc + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  if (out.rows() != a.cols() || out.cols() != b.cols()) out = Tensor(a.cols(), b.cols());
  else if (!accumulate) out.fill(0.0);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    const double* brow = pb + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* crow = pc + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Tensor(a.rows(), b.rows());
  else if (!accumulate) out.fill(0.0);
  const int n = a.rows(), k = a.cols(), m = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* crow = pc + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = pb + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out;
  matmul_nn(out, a, b, false);
  return out;
}

Tensor transpose(const Tensor& t) {
  Tensor out(t.cols(), t.rows());
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) out(j, i) = t(i, j);
  return out;
}

}  // namespace trajcluster
