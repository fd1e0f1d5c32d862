// Generalized Hermitian eigenproblems K x = lambda M x with K >= 0 and M > 0.
//
// The spectrum is cut into slices. LDL^T inertia of K - s M gives the exact
// number of eigenvalues below s, so each slice knows how many pairs it owes.
// Inside a slice a block shift-invert Lanczos with full reorthogonalization
// and locking collects them; the block size makes repeated eigenvalues cheap.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace spinlap {

struct EigensolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EigOptions {
  int block = 8;
  int max_basis = 480;       // Krylov columns before a locking restart
  int max_restarts = 40;
  int slice_target = 48;     // eigenvalues per slice
  double tol = 1e-9;         // relative residual of the shift-inverted Ritz pairs
  std::uint64_t seed = 1234;
};

template <class Scalar>
struct EigResult {
  Eigen::VectorXd values;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // M-orthonormal columns
  Eigen::VectorXd residuals;  // ||K x - lambda M x|| / ||K x|| (or ||M x|| where K x ~ 0)
};

template <class Scalar>
class GeneralizedEigensolver {
 public:
  using Sparse = Eigen::SparseMatrix<Scalar>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Real = double;

  GeneralizedEigensolver(const Sparse& K, const Sparse& M, EigOptions opt = {}) : K_(K), M_(M), opt_(opt), rng_(opt.seed) {
    if (K.rows() != K.cols() || M.rows() != M.cols() || K.rows() != M.rows()) throw EigensolverError("pencil dimensions mismatch");
  }

  int size() const { return static_cast<int>(K_.rows()); }
  int factorizations() const { return factorizations_; }

  // Number of eigenvalues strictly below s.
  int count_below(double s) {
    Eigen::SimplicialLDLT<Sparse, Eigen::Lower, Eigen::AMDOrdering<int>> F;
    Sparse A = shifted(s);
    F.compute(A);
    ++factorizations_;
    if (F.info() != Eigen::Success) throw EigensolverError("LDLT failed at shift " + std::to_string(s));
    int neg = 0;
    auto D = F.vectorD();
    for (int i = 0; i < D.size(); ++i)
      if (std::real(D[i]) < 0) ++neg;
    return neg;
  }

  // All eigenpairs in [a, b).
  EigResult<Scalar> interval(double a, double b, bool want_vectors = true) {
    int na = count_below(a), nb = count_below(b);
    return slice(a, b, nb - na, want_vectors);
  }

  // The n smallest eigenpairs.
  EigResult<Scalar> lowest(int n, double lower = -1e-8, bool want_vectors = true) {
    if (n <= 0) return {};
    if (n > size()) throw EigensolverError("more eigenvalues requested than the problem size");
    std::vector<EigResult<Scalar>> parts;
    double a = lower;
    int na = count_below(a);
    if (na > 0) throw EigensolverError("pencil has eigenvalues below the requested lower bound");
    int have = 0;
    double step = initial_step();
    while (have < n) {
      int want = std::min(opt_.slice_target, n - have);
      double b = a + step;
      int nb = count_below(b);
      for (int it = 0; it < 60 && (nb - na > 2 * opt_.slice_target || nb - na < want); ++it) {
        if (nb - na > 2 * opt_.slice_target) {
          step *= 0.5;
        } else {
          step *= (nb - na == 0) ? 2.0 : std::min(2.0, 1.2 * double(want) / double(nb - na));
        }
        b = a + step;
        nb = count_below(b);
      }
      parts.push_back(slice(a, b, nb - na, want_vectors));
      have += nb - na;
      a = b;
      na = nb;
    }
    auto all = concat(parts, want_vectors);
    return truncate(all, n, want_vectors);
  }

  // All eigenpairs below `upper`.
  EigResult<Scalar> below(double upper, double lower = -1e-8, bool want_vectors = true) {
    int nb = count_below(upper);
    if (nb == 0) return {};
    auto r = lowest(nb, lower, want_vectors);
    return r;
  }

  EigResult<Scalar> slice(double a, double b, int count, bool want_vectors) {
    EigResult<Scalar> out;
    if (count <= 0) {
      out.values.resize(0);
      out.residuals.resize(0);
      out.vectors.resize(size(), 0);
      return out;
    }
    const int n = size();
    const double sigma = 0.5 * (a + b);
    Eigen::SimplicialLDLT<Sparse, Eigen::Lower, Eigen::AMDOrdering<int>> F;
    F.compute(shifted(sigma));
    ++factorizations_;
    if (F.info() != Eigen::Success) throw EigensolverError("LDLT failed at slice shift");
    auto op = [&](const Mat& X) -> Mat {
      Mat MX = M_ * X;
      return F.solve(MX);
    };
    const int bs = std::max(1, std::min(opt_.block, n));
    Mat Y(n, 0);  // locked, M-orthonormal
    std::vector<double> ylam;
    Mat start = random_block(n, bs);
    for (int restart = 0; restart < opt_.max_restarts; ++restart) {
      int locked_in = static_cast<int>(ylam.size());
      if (locked_in >= count) break;
      const int cap = std::max(std::min(opt_.max_basis, n - static_cast<int>(Y.cols())), bs);
      Mat Q(n, cap + bs);
      Mat H = Mat::Zero(cap + bs, cap + bs);
      Mat V = start;
      orthogonalize_against(V, Y);
      int r0 = m_orthonormalize(V);
      if (r0 == 0) {
        V = random_block(n, bs);
        orthogonalize_against(V, Y);
        r0 = m_orthonormalize(V);
      }
      Q.leftCols(r0) = V.leftCols(r0);
      int m = r0, cur = 0, curw = r0;
      bool done = false;
      Eigen::VectorXd theta;
      Mat S;
      std::vector<double> res;
      int last_block_start = 0, last_block_w = r0;
      Mat Rlast;
      while (!done) {
        Mat W = op(Q.middleCols(cur, curw));
        Mat MQ = M_ * Q.leftCols(m);
        for (int pass = 0; pass < 2; ++pass) {
          Mat C = MQ.adjoint() * W;
          W -= Q.leftCols(m) * C;
          H.block(0, cur, m, curw) += C;
          if (Y.cols() > 0) {
            Mat MY = M_ * Y;
            W -= Y * (MY.adjoint() * W);
          }
        }
        Mat R;
        int w = m_orthonormalize(W, &R);
        last_block_start = cur;
        last_block_w = curw;
        Rlast = R.topRows(w);
        // Rayleigh-Ritz on the current basis
        Mat Hm = H.topLeftCorner(m, m);
        Hm = (0.5 * (Hm + Hm.adjoint())).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(Hm);
        theta = es.eigenvalues();
        S = es.eigenvectors();
        res.assign(m, 0.0);
        for (int i = 0; i < m; ++i) res[i] = w > 0 ? (Rlast * S.block(last_block_start, i, last_block_w, 1)).norm() : 0.0;
        int conv = 0;
        for (int i = 0; i < m; ++i) {
          double lam = sigma + 1.0 / theta[i];
          if (lam >= a && lam < b && res[i] <= opt_.tol * std::abs(theta[i])) ++conv;
        }
        if (conv + locked_in >= count || w == 0 || m + w > cap) {
          done = true;
          break;
        }
        Q.middleCols(m, w) = W.leftCols(w);
        H.block(m, cur, w, curw) = Rlast;
        cur = m;
        curw = w;
        m += w;
      }
      // lock converged pairs inside the slice, restart from the best unconverged ones
      std::vector<int> order(m);
      for (int i = 0; i < m; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int i, int j) { return std::abs(theta[i]) > std::abs(theta[j]); });
      std::vector<int> lock, keep;
      for (int i : order) {
        double lam = sigma + 1.0 / theta[i];
        bool inside = lam >= a && lam < b;
        if (inside && res[i] <= opt_.tol * std::abs(theta[i]))
          lock.push_back(i);
        else if (static_cast<int>(keep.size()) < bs)
          keep.push_back(i);
      }
      if (!lock.empty()) {
        Mat X(n, lock.size());
        for (size_t c = 0; c < lock.size(); ++c) X.col(c) = Q.leftCols(m) * S.col(lock[c]);
        orthogonalize_against(X, Y);
        Mat X2 = X;
        int rk = m_orthonormalize(X2);
        int old = static_cast<int>(Y.cols());
        Y.conservativeResize(n, old + rk);
        Y.rightCols(rk) = X2.leftCols(rk);
        for (int c = 0; c < rk; ++c) ylam.push_back(0.0);
      }
      start.resize(n, bs);
      for (int c = 0; c < bs; ++c) {
        if (c < static_cast<int>(keep.size()))
          start.col(c) = Q.leftCols(m) * S.col(keep[c]);
        else
          start.col(c) = random_block(n, 1).col(0);
      }
    }
    if (static_cast<int>(ylam.size()) < count)
      throw EigensolverError("slice [" + std::to_string(a) + ", " + std::to_string(b) + ") converged " + std::to_string(ylam.size()) +
                             " of " + std::to_string(count) + " eigenpairs");
    // final Rayleigh-Ritz on the locked space, then keep the pairs inside the slice
    Mat KY = K_ * Y, MY = M_ * Y;
    Mat Ks = Y.adjoint() * KY, Ms = Y.adjoint() * MY;
    Ks = (0.5 * (Ks + Ks.adjoint())).eval();
    Ms = (0.5 * (Ms + Ms.adjoint())).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Ks, Ms);
    Eigen::VectorXd lam = ges.eigenvalues();
    Mat X = Y * ges.eigenvectors();
    std::vector<int> idx;
    for (int i = 0; i < lam.size(); ++i)
      if (lam[i] >= a && lam[i] < b) idx.push_back(i);
    if (static_cast<int>(idx.size()) != count)
      throw EigensolverError("slice [" + std::to_string(a) + ", " + std::to_string(b) + ") holds " + std::to_string(count) +
                             " eigenvalues but " + std::to_string(idx.size()) + " were resolved");
    out.values.resize(count);
    out.residuals.resize(count);
    if (want_vectors) out.vectors.resize(n, count);
    for (int c = 0; c < count; ++c) {
      int i = idx[c];
      Vec x = X.col(i);
      Vec kx = K_ * x, mx = M_ * x;
      double scale = std::max(kx.norm(), mx.norm() * std::max(1.0, std::abs(lam[i])));
      out.values[c] = lam[i];
      out.residuals[c] = (kx - lam[i] * mx).norm() / scale;
      if (want_vectors) out.vectors.col(c) = x;
    }
    return out;
  }

 private:
  Sparse K_, M_;
  EigOptions opt_;
  std::mt19937_64 rng_;
  int factorizations_ = 0;

  Sparse shifted(double s) const {
    Sparse A = K_ - Scalar(s) * M_;
    A.makeCompressed();
    return A;
  }

  double initial_step() const {
    // Rayleigh quotient of the diagonal as a crude spectral scale
    double kd = 0, md = 0;
    for (int i = 0; i < size(); ++i) {
      kd += std::abs(K_.coeff(i, i));
      md += std::abs(M_.coeff(i, i));
    }
    double scale = kd / std::max(md, 1e-300);
    return scale * double(opt_.slice_target) / double(size()) + 1e-12;
  }

  Mat random_block(int n, int cols) {
    std::normal_distribution<double> N(0.0, 1.0);
    Mat X(n, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < n; ++i) {
        if constexpr (std::is_same_v<Scalar, double>)
          X(i, j) = N(rng_);
        else
          X(i, j) = Scalar(N(rng_), N(rng_));
      }
    return X;
  }

  void orthogonalize_against(Mat& X, const Mat& Y) const {
    if (Y.cols() == 0) return;
    Mat MY = M_ * Y;
    for (int pass = 0; pass < 2; ++pass) X -= Y * (MY.adjoint() * X);
  }

  // M-orthonormalize columns of X in place (rank-revealing Gram-Schmidt); returns the rank.
  int m_orthonormalize(Mat& X, Mat* Rout = nullptr) const {
    const int c = static_cast<int>(X.cols());
    Mat R = Mat::Zero(c, c);
    Mat MX = M_ * X;
    double ref = 0;
    for (int j = 0; j < c; ++j) ref = std::max(ref, std::sqrt(std::abs(std::real(X.col(j).dot(MX.col(j))))));
    int rank = 0;
    Mat Out(X.rows(), c);
    Mat MOut(X.rows(), c);
    std::vector<int> pivot_col;
    for (int j = 0; j < c; ++j) {
      Vec v = X.col(j);
      Vec mv = MX.col(j);
      for (int pass = 0; pass < 2; ++pass)
        for (int k = 0; k < rank; ++k) {
          Scalar d = MOut.col(k).dot(v);
          v -= d * Out.col(k);
          mv -= d * MOut.col(k);
          R(k, j) += d;
        }
      double nv = std::sqrt(std::abs(std::real(v.dot(mv))));
      if (nv <= 1e-10 * std::max(ref, 1e-300)) continue;
      Out.col(rank) = v / nv;
      MOut.col(rank) = mv / nv;
      R(rank, j) = nv;
      ++rank;
    }
    X = Out.leftCols(rank);
    if (Rout) *Rout = R.topRows(rank);
    return rank;
  }

  static EigResult<Scalar> concat(const std::vector<EigResult<Scalar>>& parts, bool vecs) {
    EigResult<Scalar> r;
    int tot = 0, n = 0;
    for (const auto& p : parts) {
      tot += static_cast<int>(p.values.size());
      if (p.vectors.rows() > 0) n = static_cast<int>(p.vectors.rows());
    }
    r.values.resize(tot);
    r.residuals.resize(tot);
    if (vecs) r.vectors.resize(n, tot);
    int at = 0;
    for (const auto& p : parts) {
      int c = static_cast<int>(p.values.size());
      r.values.segment(at, c) = p.values;
      r.residuals.segment(at, c) = p.residuals;
      if (vecs && c > 0) r.vectors.middleCols(at, c) = p.vectors;
      at += c;
    }
    return r;
  }

  static EigResult<Scalar> truncate(const EigResult<Scalar>& r, int n, bool vecs) {
    EigResult<Scalar> o;
    o.values = r.values.head(n);
    o.residuals = r.residuals.head(n);
    if (vecs) o.vectors = r.vectors.leftCols(n);
    return o;
  }
};

// Dense reference for small pencils.
template <class Scalar>
Eigen::VectorXd dense_generalized_eigenvalues(const Eigen::SparseMatrix<Scalar>& K, const Eigen::SparseMatrix<Scalar>& M) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat Kd = Mat(K), Md = Mat(M);
  Kd = (0.5 * (Kd + Kd.adjoint())).eval();
  Md = (0.5 * (Md + Md.adjoint())).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Kd, Md, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace spinlap
