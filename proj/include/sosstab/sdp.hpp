#pragma once

// Primal-dual interior-point solver for semidefinite programs in standard
// equality form over a product of PSD cones and a free block:
//
//   minimize    c'x
//   subject to  A x = b,   x = (svec(X_1), ..., svec(X_K), x_free),
//               X_k >= 0 (positive semidefinite), x_free unrestricted.
//
// Symmetric matrix variables are packed column-major upper-triangle with
// off-diagonal entries scaled by sqrt(2) so that dot products of packed
// vectors equal trace inner products of the matrices.
//
// The algorithm embeds the primal-dual pair in a homogeneous self-dual model
// and runs a Mehrotra predictor-corrector scheme with Nesterov-Todd scaling,
// so it detects infeasibility through the embedding rather than by failing.
// Rows that touch no cone variable (they pin combinations of free variables)
// are eliminated by substitution in presolve; they would otherwise zero out
// rows of the Schur complement. Everything is deterministic: repeated solves
// of the same problem produce bitwise identical output.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sosstab {

inline constexpr double kSqrt2 = 1.4142135623730951;

// Packed length of an m x m symmetric matrix.
inline int svec_size(int m) { return m * (m + 1) / 2; }

// Position of entry (i, j), i <= j, inside the packed upper triangle.
inline int svec_index(int i, int j) { return j * (j + 1) / 2 + i; }

inline Eigen::VectorXd svec(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::VectorXd v(svec_size(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i)
      v[svec_index(i, j)] = (i == j) ? m(i, j) : kSqrt2 * m(i, j);
  return v;
}

inline Eigen::MatrixXd smat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const int len = static_cast<int>(v.size());
  const int n = static_cast<int>((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0 + 0.5);
  if (svec_size(n) != len) throw std::invalid_argument("smat: length is not triangular");
  Eigen::MatrixXd m(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double w = (i == j) ? v[svec_index(i, j)] : v[svec_index(i, j)] / kSqrt2;
      m(i, j) = w;
      m(j, i) = w;
    }
  return m;
}

// Column bookkeeping for a cone product: PSD blocks first, free block last.
struct SdpLayout {
  std::vector<int> dims;
  int nfree = 0;
  std::vector<int> offsets;  // packed start of each block
  int cone = 0;              // total packed cone length

  SdpLayout() = default;
  SdpLayout(std::vector<int> block_dims, int free_count)
      : dims(std::move(block_dims)), nfree(free_count) {
    offsets.resize(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (dims[k] < 1) throw std::invalid_argument("SdpLayout: block dimension < 1");
      offsets[k] = cone;
      cone += svec_size(dims[k]);
    }
    if (nfree < 0) throw std::invalid_argument("SdpLayout: negative free count");
  }

  int total() const { return cone + nfree; }
  int col(int block, int i, int j) const {
    return offsets[block] + (i <= j ? svec_index(i, j) : svec_index(j, i));
  }
  int free_col(int t) const { return cone + t; }
};

struct SdpProblem {
  SdpLayout layout;
  Eigen::SparseMatrix<double, Eigen::RowMajor> a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;

  int rows() const { return static_cast<int>(a.rows()); }
  int cols() const { return layout.total(); }
};

enum class SdpStatus { Optimal, Infeasible, MaxIter, NumericalFailure };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "optimal";
    case SdpStatus::Infeasible: return "infeasible";
    case SdpStatus::MaxIter: return "max_iterations";
    case SdpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

struct SdpOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 200;
  double schur_reg = 1e-12;
  double step_scale = 0.99;
  // A run that stalls is still reported optimal if its best iterate meets the
  // tolerances scaled by this factor.
  double relaxed_tol_factor = 100.0;
  // Extra steps taken after the tolerances are first met, as long as each one
  // keeps sharpening the iterate. The best iterate seen is returned.
  int polish_iters = 2;
  bool verbose = false;
};

struct SdpIterInfo {
  int iter = 0;
  double mu = 0, pres = 0, dres = 0, gap = 0, step = 0, tau = 0, kappa = 0;
};

struct SdpResidualReport {
  double primal = 0;
  double dual = 0;
  double gap = 0;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  std::vector<Eigen::MatrixXd> blocks;       // primal blocks (certificate ray if infeasible)
  Eigen::VectorXd free_vals;
  Eigen::VectorXd y;                         // equality multipliers
  std::vector<Eigen::MatrixXd> dual_blocks;  // dual slack blocks
  double primal_obj = 0;
  double dual_obj = 0;
  SdpResidualReport residuals;
  int iterations = 0;
  std::string message;
  std::vector<SdpIterInfo> trace;
};

// Feasibility and gap of a candidate point, recomputed from the raw problem
// data without touching solver internals.
inline SdpResidualReport sdp_residuals(const SdpProblem& prob, const SdpSolution& sol) {
  const SdpLayout& lay = prob.layout;
  Eigen::VectorXd x(lay.total());
  for (std::size_t k = 0; k < lay.dims.size(); ++k)
    x.segment(lay.offsets[k], svec_size(lay.dims[k])) = svec(sol.blocks[k]);
  if (lay.nfree > 0) x.tail(lay.nfree) = sol.free_vals;

  Eigen::VectorXd z = Eigen::VectorXd::Zero(lay.total());
  for (std::size_t k = 0; k < lay.dims.size(); ++k)
    z.segment(lay.offsets[k], svec_size(lay.dims[k])) = svec(sol.dual_blocks[k]);

  SdpResidualReport rep;
  const Eigen::VectorXd pr = prob.a * x - prob.b;
  const Eigen::VectorXd dr = prob.a.transpose() * sol.y + z - prob.c;
  const double pobj = prob.c.dot(x);
  const double dobj = prob.b.dot(sol.y);
  rep.primal = pr.lpNorm<Eigen::Infinity>() / (1.0 + prob.b.lpNorm<Eigen::Infinity>());
  rep.dual = dr.lpNorm<Eigen::Infinity>() / (1.0 + prob.c.lpNorm<Eigen::Infinity>());
  rep.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  return rep;
}

namespace sdp_detail {

// One constraint row split by block, with matrix entries de-scaled back to
// symmetric form and flattened for fast Schur accumulation.
struct RowData {
  struct BlockPart {
    int block = 0;
    std::vector<int> gather;        // distinct matrix indices touched
    Eigen::MatrixXd msmall;         // symmetric restriction to the gathered indices
    std::vector<int> p, q;          // entry positions (p <= q)
    std::vector<double> w;          // weight giving <smat(row), T> = sum w * T(p, q)
  };
  std::vector<BlockPart> parts;
};

class HsdSolver {
 public:
  HsdSolver(const SdpProblem& prob, const SdpOptions& opt) : orig_(prob), opt_(opt) {
    validate();
  }

  SdpSolution solve() {
    SdpSolution early;
    if (presolve(&early)) return early;
    initialize();
    SdpSolution sol;
    run(&sol);
    return sol;
  }

 private:
  const SdpProblem& orig_;
  SdpOptions opt_;

  // presolved data (free-only rows substituted out, rows scaled to unit
  // infinity norm)
  Eigen::SparseMatrix<double, Eigen::RowMajor> a_;
  Eigen::VectorXd b_, c_;
  std::vector<int> kept_rows_;
  std::vector<double> row_scale_;
  int q_ = 0;           // presolved row count
  int ncols_ = 0;       // solver column count after substitution
  int ncone_ = 0;       // packed cone columns
  int nfree_ = 0;       // free columns kept by the solver
  int nfree_orig_ = 0;  // free columns of the input problem
  int nblocks_ = 0;
  double nu_ = 0;       // barrier parameter: sum of block dimensions

  // free-variable substitution: pivot columns are expressed as
  // d - E * (nonpivot columns)
  bool has_pins_ = false;
  std::vector<int> pinned_rows_;  // original indices of free-only rows
  Eigen::MatrixXd af1_;           // their free coefficients, for dual recovery
  std::vector<int> pivot_cols_, nonpivot_cols_;
  Eigen::MatrixXd esub_;
  Eigen::VectorXd dsub_;

  std::vector<RowData> rows_;
  Eigen::MatrixXd af_;  // dense free-column slice of a_

  // iterate
  Eigen::VectorXd x_, y_, z_;
  double tau_ = 1, kappa_ = 1;

  // most accurate iterate seen, kept so a stalled run can hand back something
  // better than its final corrupted point
  struct Snapshot {
    Eigen::VectorXd x, y, z;
    double tau = 1, kappa = 1;
    double pres = 0, dres = 0, gap = 0;
    bool set = false;
  };
  Snapshot best_;
  double best_merit_ = std::numeric_limits<double>::infinity();

  // per-iteration scaling state
  std::vector<Eigen::MatrixXd> r_, rinv_, wmat_;
  std::vector<Eigen::VectorXd> lam_;

  // per-iteration factorizations
  Eigen::MatrixXd schur_;
  Eigen::LLT<Eigen::MatrixXd> schur_llt_;
  Eigen::MatrixXd fmat_;
  Eigen::LLT<Eigen::MatrixXd> f_llt_;
  Eigen::VectorXd gc_, shat_;
  double wcc_ = 0;
  Eigen::VectorXd gsol_y_, gsol_f_;

  void validate() const {
    const SdpLayout& lay = orig_.layout;
    if (lay.dims.empty())
      throw std::invalid_argument("sdp: problem has no cone blocks");
    if (orig_.a.cols() != lay.total())
      throw std::invalid_argument("sdp: constraint matrix column count mismatch");
    if (orig_.b.size() != orig_.a.rows())
      throw std::invalid_argument("sdp: right-hand side length mismatch");
    if (orig_.c.size() != lay.total())
      throw std::invalid_argument("sdp: objective length mismatch");
    if (!orig_.b.allFinite() || !orig_.c.allFinite())
      throw std::invalid_argument("sdp: non-finite problem data");
    for (int r = 0; r < orig_.a.outerSize(); ++r)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(orig_.a, r); it; ++it)
        if (!std::isfinite(it.value()))
          throw std::invalid_argument("sdp: non-finite constraint coefficient");
  }

  SdpSolution infeasible_stub(const std::string& why) const {
    SdpSolution sol;
    sol.status = SdpStatus::Infeasible;
    sol.message = why;
    const SdpLayout& lay = orig_.layout;
    for (int d : lay.dims) {
      sol.blocks.emplace_back(Eigen::MatrixXd::Zero(d, d));
      sol.dual_blocks.emplace_back(Eigen::MatrixXd::Zero(d, d));
    }
    sol.free_vals = Eigen::VectorXd::Zero(lay.nfree);
    sol.y = Eigen::VectorXd::Zero(orig_.rows());
    return sol;
  }

  // Removes empty and duplicate rows, substitutes out free-only rows and
  // equilibrates the rest. Returns true when presolve alone settles the
  // problem (trivially inconsistent rows).
  bool presolve(SdpSolution* early) {
    const SdpLayout& lay = orig_.layout;
    ncone_ = lay.cone;
    nfree_orig_ = lay.nfree;
    nblocks_ = static_cast<int>(lay.dims.size());
    nu_ = 0;
    for (int d : lay.dims) nu_ += d;

    struct RawRow {
      std::vector<std::pair<int, double>> cone, free;
      double b = 0;
      int orig = 0;
    };
    std::vector<RawRow> cone_rows, pin_rows;
    std::map<std::vector<std::pair<int, double>>, double> seen;

    const int qin = orig_.rows();
    for (int r = 0; r < qin; ++r) {
      std::vector<std::pair<int, double>> entries;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(orig_.a, r); it; ++it)
        if (it.value() != 0.0) entries.emplace_back(static_cast<int>(it.col()), it.value());
      if (entries.empty()) {
        if (std::abs(orig_.b[r]) > 1e-12) {
          *early = infeasible_stub("inconsistent constraint row with empty left-hand side");
          return true;
        }
        continue;
      }
      auto found = seen.find(entries);
      if (found != seen.end()) {
        if (orig_.b[r] == found->second) continue;
        *early = infeasible_stub("duplicate constraint rows with conflicting right-hand sides");
        return true;
      }
      seen.emplace(entries, orig_.b[r]);
      RawRow row;
      row.b = orig_.b[r];
      row.orig = r;
      for (const auto& [col, val] : entries)
        (col < ncone_ ? row.cone : row.free).emplace_back(col, val);
      (row.cone.empty() ? pin_rows : cone_rows).push_back(std::move(row));
    }

    if (!eliminate_pins(pin_rows, early)) return true;
    nfree_ = static_cast<int>(nonpivot_cols_.size());
    ncols_ = ncone_ + nfree_;
    std::vector<int> free_pos(nfree_orig_, -1);
    for (int k = 0; k < nfree_; ++k) free_pos[nonpivot_cols_[k]] = k;
    std::vector<int> pivot_pos(nfree_orig_, -1);
    for (std::size_t j = 0; j < pivot_cols_.size(); ++j) pivot_pos[pivot_cols_[j]] = static_cast<int>(j);

    q_ = static_cast<int>(cone_rows.size());
    if (q_ == 0) throw std::invalid_argument("sdp: no constraints couple the cone blocks");

    std::vector<Eigen::Triplet<double>> trips;
    b_.resize(q_);
    row_scale_.assign(qin, 1.0);
    kept_rows_.clear();
    for (int r = 0; r < q_; ++r) {
      const RawRow& row = cone_rows[r];
      double rhs = row.b;
      std::map<int, double> fvals;
      for (const auto& [col, val] : row.free) {
        const int t = col - ncone_;
        if (pivot_pos[t] >= 0) {
          const int j = pivot_pos[t];
          rhs -= val * dsub_[j];
          for (int k = 0; k < nfree_; ++k)
            if (esub_(j, k) != 0.0) fvals[k] -= val * esub_(j, k);
        } else {
          fvals[free_pos[t]] += val;
        }
      }
      double amax = 0;
      for (const auto& [col, val] : row.cone) amax = std::max(amax, std::abs(val));
      for (const auto& [k, val] : fvals) amax = std::max(amax, std::abs(val));
      const double d = 1.0 / amax;
      row_scale_[row.orig] = d;
      for (const auto& [col, val] : row.cone) trips.emplace_back(r, col, val * d);
      for (const auto& [k, val] : fvals)
        if (val != 0.0) trips.emplace_back(r, ncone_ + k, val * d);
      b_[r] = rhs * d;
      kept_rows_.push_back(row.orig);
    }

    a_.resize(q_, ncols_);
    a_.setFromTriplets(trips.begin(), trips.end());
    a_.makeCompressed();

    c_.resize(ncols_);
    c_.head(ncone_) = orig_.c.head(ncone_);
    for (int k = 0; k < nfree_; ++k) {
      double v = orig_.c[ncone_ + nonpivot_cols_[k]];
      for (std::size_t j = 0; j < pivot_cols_.size(); ++j)
        v -= orig_.c[ncone_ + pivot_cols_[j]] * esub_(static_cast<int>(j), k);
      c_[ncone_ + k] = v;
    }

    build_row_data();
    if (nfree_ > 0) af_ = Eigen::MatrixXd(a_.rightCols(nfree_));
    return false;
  }

  // Reduces the free-only rows to reduced row echelon form, yielding the
  // substitution pivot = d - E * nonpivot. Returns false on inconsistency.
  template <typename RawRows>
  bool eliminate_pins(const RawRows& pin_rows, SdpSolution* early) {
    pivot_cols_.clear();
    nonpivot_cols_.clear();
    if (pin_rows.empty()) {
      for (int t = 0; t < nfree_orig_; ++t) nonpivot_cols_.push_back(t);
      esub_.resize(0, nfree_orig_);
      dsub_.resize(0);
      return true;
    }
    has_pins_ = true;
    const int r1 = static_cast<int>(pin_rows.size());
    af1_ = Eigen::MatrixXd::Zero(r1, nfree_orig_);
    Eigen::VectorXd b1(r1);
    pinned_rows_.clear();
    for (int i = 0; i < r1; ++i) {
      for (const auto& [col, val] : pin_rows[i].free) af1_(i, col - ncone_) = val;
      b1[i] = pin_rows[i].b;
      pinned_rows_.push_back(pin_rows[i].orig);
    }

    Eigen::MatrixXd m(r1, nfree_orig_ + 1);
    m.leftCols(nfree_orig_) = af1_;
    m.col(nfree_orig_) = b1;
    const double tol = 1e-12 * std::max(1.0, af1_.cwiseAbs().maxCoeff());
    std::vector<char> is_pivot(nfree_orig_, 0);
    int rank = 0;
    for (int col = 0; col < nfree_orig_ && rank < r1; ++col) {
      int best = -1;
      double bv = tol;
      for (int i = rank; i < r1; ++i)
        if (std::abs(m(i, col)) > bv) {
          bv = std::abs(m(i, col));
          best = i;
        }
      if (best < 0) continue;
      m.row(best).swap(m.row(rank));
      m.row(rank) /= m(rank, col);
      for (int i = 0; i < r1; ++i)
        if (i != rank && m(i, col) != 0.0) m.row(i) -= m(i, col) * m.row(rank);
      pivot_cols_.push_back(col);
      is_pivot[col] = 1;
      ++rank;
    }
    for (int col = 0; col < nfree_orig_; ++col)
      if (!is_pivot[col]) nonpivot_cols_.push_back(col);
    for (int i = rank; i < r1; ++i)
      if (std::abs(m(i, nfree_orig_)) > 1e-9 * (1.0 + b1.cwiseAbs().maxCoeff())) {
        *early = infeasible_stub("inconsistent constraints among free variables");
        return false;
      }

    const int nnp = static_cast<int>(nonpivot_cols_.size());
    esub_.resize(rank, nnp);
    dsub_.resize(rank);
    for (int j = 0; j < rank; ++j) {
      for (int k = 0; k < nnp; ++k) esub_(j, k) = m(j, nonpivot_cols_[k]);
      dsub_[j] = m(j, nfree_orig_);
    }
    return true;
  }

  void build_row_data() {
    const SdpLayout& lay = orig_.layout;
    rows_.assign(q_, RowData{});
    for (int r = 0; r < q_; ++r) {
      std::map<int, std::vector<std::array<double, 3>>> per_block;  // (p, q, val)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a_, r); it; ++it) {
        const int col = static_cast<int>(it.col());
        if (col >= ncone_) continue;
        int k = nblocks_ - 1;
        while (lay.offsets[k] > col) --k;
        const int local = col - lay.offsets[k];
        const int j = static_cast<int>((std::sqrt(8.0 * local + 1.0) - 1.0) / 2.0);
        const int i = local - svec_index(0, j);
        per_block[k].push_back({static_cast<double>(i), static_cast<double>(j), it.value()});
      }
      for (auto& [k, ents] : per_block) {
        RowData::BlockPart part;
        part.block = k;
        std::map<int, int> remap;
        for (const auto& e : ents) {
          remap.emplace(static_cast<int>(e[0]), 0);
          remap.emplace(static_cast<int>(e[1]), 0);
        }
        for (auto& [idx, pos] : remap) {
          pos = static_cast<int>(part.gather.size());
          part.gather.push_back(idx);
        }
        const int s = static_cast<int>(part.gather.size());
        part.msmall = Eigen::MatrixXd::Zero(s, s);
        for (const auto& e : ents) {
          const int i = static_cast<int>(e[0]);
          const int j = static_cast<int>(e[1]);
          const double val = e[2];
          const int li = remap[i], lj = remap[j];
          if (i == j) {
            part.msmall(li, lj) += val;
          } else {
            part.msmall(li, lj) += val / kSqrt2;
            part.msmall(lj, li) += val / kSqrt2;
          }
          part.p.push_back(i);
          part.q.push_back(j);
          part.w.push_back(i == j ? val : kSqrt2 * val);
        }
        rows_[r].parts.push_back(std::move(part));
      }
    }
  }

  void initialize() {
    const SdpLayout& lay = orig_.layout;
    x_ = Eigen::VectorXd::Zero(ncols_);
    z_ = Eigen::VectorXd::Zero(ncols_);
    for (int k = 0; k < nblocks_; ++k) {
      const Eigen::VectorXd id = svec(Eigen::MatrixXd::Identity(lay.dims[k], lay.dims[k]));
      x_.segment(lay.offsets[k], id.size()) = id;
      z_.segment(lay.offsets[k], id.size()) = id;
    }
    y_ = Eigen::VectorXd::Zero(q_);
    tau_ = 1;
    kappa_ = 1;
    r_.assign(nblocks_, Eigen::MatrixXd());
    rinv_.assign(nblocks_, Eigen::MatrixXd());
    wmat_.assign(nblocks_, Eigen::MatrixXd());
    lam_.assign(nblocks_, Eigen::VectorXd());
  }

  Eigen::Ref<const Eigen::VectorXd> block_seg(const Eigen::VectorXd& v, int k) const {
    const SdpLayout& lay = orig_.layout;
    return v.segment(lay.offsets[k], svec_size(lay.dims[k]));
  }

  // x -> svec(W smat(x) W) per block; the free tail passes through as zero.
  Eigen::VectorXd apply_scaling(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(ncols_);
    const SdpLayout& lay = orig_.layout;
    for (int k = 0; k < nblocks_; ++k) {
      const Eigen::MatrixXd m = smat(block_seg(v, k));
      const Eigen::MatrixXd t = wmat_[k] * m * wmat_[k];
      out.segment(lay.offsets[k], svec_size(lay.dims[k])) = svec(t);
    }
    return out;
  }

  // Nesterov-Todd scaling point for every block. Returns false if an iterate
  // lost positive definiteness.
  bool compute_scaling() {
    for (int k = 0; k < nblocks_; ++k) {
      const Eigen::MatrixXd xm = smat(block_seg(x_, k));
      const Eigen::MatrixXd zm = smat(block_seg(z_, k));
      Eigen::LLT<Eigen::MatrixXd> cx(xm), cz(zm);
      if (cx.info() != Eigen::Success || cz.info() != Eigen::Success) return false;
      const Eigen::MatrixXd lx = cx.matrixL();
      const Eigen::MatrixXd lz = cz.matrixL();
      Eigen::BDCSVD<Eigen::MatrixXd> svd(lz.transpose() * lx,
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::VectorXd& sv = svd.singularValues();
      if (sv[sv.size() - 1] <= 0) return false;
      const Eigen::VectorXd shalf = sv.cwiseSqrt();
      r_[k] = lx * svd.matrixV() * shalf.cwiseInverse().asDiagonal();
      // rinv = diag(shalf) V' inv(lx); solve the triangular system instead of inverting
      Eigen::MatrixXd rhs = svd.matrixV() * shalf.asDiagonal();
      rinv_[k] = lx.transpose().triangularView<Eigen::Upper>().solve(rhs).transpose();
      wmat_[k] = r_[k] * r_[k].transpose();
      lam_[k] = sv;
    }
    return true;
  }

  // Schur complement of the cone part: S(i, j) = <smat(a_i), W smat(a_j) W>
  // summed over blocks, built row by row through small gathered products.
  void build_schur() {
    schur_.resize(q_, q_);
    schur_.setZero();
    std::vector<Eigen::MatrixXd> tk(nblocks_);
    std::vector<char> have(nblocks_, 0);
    for (int i = 0; i < q_; ++i) {
      std::fill(have.begin(), have.end(), 0);
      for (const auto& part : rows_[i].parts) {
        const Eigen::MatrixXd& w = wmat_[part.block];
        const int m = static_cast<int>(w.rows());
        const int s = static_cast<int>(part.gather.size());
        Eigen::MatrixXd bsel(m, s);
        for (int t = 0; t < s; ++t) bsel.col(t) = w.col(part.gather[t]);
        tk[part.block] = bsel * (part.msmall * bsel.transpose());
        have[part.block] = 1;
      }
      for (int j = i; j < q_; ++j) {
        double acc = 0;
        for (const auto& part : rows_[j].parts) {
          if (!have[part.block]) continue;
          const Eigen::MatrixXd& t = tk[part.block];
          const std::size_t ne = part.w.size();
          for (std::size_t e = 0; e < ne; ++e) acc += part.w[e] * t(part.p[e], part.q[e]);
        }
        schur_(i, j) = acc;
        schur_(j, i) = acc;
      }
    }
    schur_.diagonal().array() += opt_.schur_reg;
  }

  bool factorize() {
    build_schur();
    schur_llt_.compute(schur_);
    if (schur_llt_.info() != Eigen::Success) return false;
    if (nfree_ > 0) {
      Eigen::MatrixXd u = af_;
      schur_llt_.matrixL().solveInPlace(u);
      fmat_ = Eigen::MatrixXd::Zero(nfree_, nfree_);
      fmat_.selfadjointView<Eigen::Lower>().rankUpdate(u.transpose());
      fmat_.diagonal().array() += opt_.schur_reg;
      f_llt_.compute(fmat_);
      if (f_llt_.info() != Eigen::Success) return false;
    }
    gc_ = apply_scaling(c_);
    shat_ = a_ * gc_;
    wcc_ = c_.head(ncone_).dot(gc_.head(ncone_));
    kkt_solve(b_ + shat_, nfree_ > 0 ? Eigen::VectorXd(-c_.tail(nfree_)) : Eigen::VectorXd(),
              &gsol_y_, &gsol_f_);
    return true;
  }

  // Solves [S  Af; -Af' 0] [dy; df] = [ry; rf] by eliminating dy.
  void kkt_solve(const Eigen::VectorXd& ry, const Eigen::VectorXd& rf, Eigen::VectorXd* dy,
                 Eigen::VectorXd* df) const {
    Eigen::VectorXd u = schur_llt_.solve(ry);
    if (nfree_ > 0) {
      *df = f_llt_.solve(rf + af_.transpose() * u);
      *dy = u - schur_llt_.solve(af_ * (*df));
    } else {
      *df = Eigen::VectorXd();
      *dy = u;
    }
  }

  struct Direction {
    Eigen::VectorXd dx, dy, dz;
    double dtau = 0, dkappa = 0;
  };

  // One Newton direction of the embedded system. eta is the target for the
  // scaled complementarity equation (packed, cone part only), eta_tk the
  // target for the tau-kappa product, rp/rd/rg the residual right-hand sides.
  bool newton_direction(const Eigen::VectorXd& eta, double eta_tk, const Eigen::VectorXd& rp,
                        const Eigen::VectorXd& rd, double rg, Direction* dir) const {
    Eigen::VectorXd rd_cone = Eigen::VectorXd::Zero(ncols_);
    rd_cone.head(ncone_) = rd.head(ncone_);
    const Eigen::VectorXd t = eta + apply_scaling(rd_cone);

    const Eigen::VectorXd ry = rp - a_ * t;
    Eigen::VectorXd rf;
    if (nfree_ > 0) rf = rd.tail(nfree_);
    Eigen::VectorXd uy, uf;
    kkt_solve(ry, rf, &uy, &uf);

    const double rho_g = rg + c_.head(ncone_).dot(t.head(ncone_));
    double denom = (b_ - shat_).dot(gsol_y_) + wcc_ + kappa_ / tau_;
    double numer = rho_g + eta_tk / tau_ - (b_ - shat_).dot(uy);
    if (nfree_ > 0) {
      denom -= c_.tail(nfree_).dot(gsol_f_);
      numer += c_.tail(nfree_).dot(uf);
    }
    if (!(denom > 0) || !std::isfinite(denom)) return false;
    const double dtau = numer / denom;

    dir->dy = uy + dtau * gsol_y_;
    Eigen::VectorXd dz = -(a_.transpose() * dir->dy) + dtau * c_ - rd;
    dz.tail(nfree_).setZero();
    dir->dz = dz;
    dir->dx = Eigen::VectorXd::Zero(ncols_);
    dir->dx.head(ncone_) = eta.head(ncone_) - apply_scaling(dz).head(ncone_);
    if (nfree_ > 0) dir->dx.tail(nfree_) = uf + dtau * gsol_f_;
    dir->dtau = dtau;
    dir->dkappa = (eta_tk - kappa_ * dtau) / tau_;
    return dir->dx.allFinite() && dir->dy.allFinite() && dir->dz.allFinite() &&
           std::isfinite(dir->dkappa);
  }

  // Largest step keeping every block positive definite and tau, kappa positive.
  double step_to_boundary(const Direction& dir) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nblocks_; ++k) {
      const Eigen::VectorXd li = lam_[k].cwiseSqrt().cwiseInverse();
      const Eigen::MatrixXd dxt = rinv_[k] * smat(block_seg(dir.dx, k)) * rinv_[k].transpose();
      const Eigen::MatrixXd dzt = r_[k].transpose() * smat(block_seg(dir.dz, k)) * r_[k];
      for (const Eigen::MatrixXd* d : {&dxt, &dzt}) {
        const Eigen::MatrixXd m = li.asDiagonal() * (*d) * li.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
        const double emin = es.eigenvalues()[0];
        if (emin < 0) alpha = std::min(alpha, -1.0 / emin);
      }
    }
    if (dir.dtau < 0) alpha = std::min(alpha, -tau_ / dir.dtau);
    if (dir.dkappa < 0) alpha = std::min(alpha, -kappa_ / dir.dkappa);
    return alpha;
  }

  void run(SdpSolution* sol) {
    const double bnorm = b_.lpNorm<Eigen::Infinity>();
    const double cnorm = c_.lpNorm<Eigen::Infinity>();
    int stalled = 0;
    int polish_used = 0;

    for (int iter = 0; iter < opt_.max_iter; ++iter) {
      const double mu = (x_.dot(z_) + tau_ * kappa_) / (nu_ + 1.0);
      const Eigen::VectorXd rp = a_ * x_ - b_ * tau_;
      const Eigen::VectorXd rd = -(a_.transpose() * y_) + c_ * tau_ - z_;
      const double rg = b_.dot(y_) - c_.dot(x_) - kappa_;

      const double pobj = c_.dot(x_) / tau_;
      const double dobj = b_.dot(y_) / tau_;
      const double pres = rp.lpNorm<Eigen::Infinity>() / tau_ / (1.0 + bnorm);
      const double dres = rd.lpNorm<Eigen::Infinity>() / tau_ / (1.0 + cnorm);
      const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

      sol->trace.push_back({iter, mu, pres, dres, relgap, 0.0, tau_, kappa_});
      sol->iterations = iter;

      const double merit = std::max({pres / opt_.feas_tol, dres / opt_.feas_tol,
                                     relgap / opt_.gap_tol});
      const bool improved = merit < best_merit_;
      if (improved) {
        best_merit_ = merit;
        best_ = {x_, y_, z_, tau_, kappa_, pres, dres, relgap, true};
      }

      if (best_meets_tol(1.0)) {
        if (polish_used >= opt_.polish_iters || !improved) {
          conclude(sol, SdpStatus::NumericalFailure, "converged");
          return;
        }
        ++polish_used;
      }
      if (detect_infeasible(sol)) return;
      if (tau_ < 1e-12 * std::max(1.0, kappa_)) {
        fail(sol, "homogenizing variable collapsed without a certificate");
        return;
      }

      if (!compute_scaling() || !factorize()) {
        fail(sol, "lost positive definiteness while factorizing");
        return;
      }

      // predictor: pure Newton step toward complementarity
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(ncols_);
      eta.head(ncone_) = -x_.head(ncone_);
      Direction aff;
      if (!newton_direction(eta, -tau_ * kappa_, -rp, -rd, -rg, &aff)) {
        fail(sol, "affine direction solve failed");
        return;
      }
      const double alpha_aff = std::min(1.0, opt_.step_scale * step_to_boundary(aff));
      const double mu_aff =
          ((x_ + alpha_aff * aff.dx).dot(z_ + alpha_aff * aff.dz) +
           (tau_ + alpha_aff * aff.dtau) * (kappa_ + alpha_aff * aff.dkappa)) /
          (nu_ + 1.0);
      double sigma = std::pow(std::max(0.0, std::min(1.0, mu_aff / mu)), 3);
      sigma = std::max(sigma, 1e-8);

      // corrector: recenter and cancel the second-order term
      Eigen::VectorXd eta2 = Eigen::VectorXd::Zero(ncols_);
      const SdpLayout& lay = orig_.layout;
      for (int k = 0; k < nblocks_; ++k) {
        const Eigen::MatrixXd dxt = rinv_[k] * smat(block_seg(aff.dx, k)) * rinv_[k].transpose();
        const Eigen::MatrixXd dzt = r_[k].transpose() * smat(block_seg(aff.dz, k)) * r_[k];
        Eigen::MatrixXd target = -0.5 * (dxt * dzt + dzt * dxt);
        target.diagonal().array() += sigma * mu;
        target.diagonal() -= lam_[k].cwiseProduct(lam_[k]);
        const int m = static_cast<int>(target.rows());
        Eigen::MatrixXd d(m, m);
        for (int jc = 0; jc < m; ++jc)
          for (int ic = 0; ic < m; ++ic)
            d(ic, jc) = 2.0 * target(ic, jc) / (lam_[k][ic] + lam_[k][jc]);
        const Eigen::MatrixXd et = r_[k] * d * r_[k].transpose();
        eta2.segment(lay.offsets[k], svec_size(lay.dims[k])) = svec(et);
      }
      const double eta_tk = sigma * mu - tau_ * kappa_ - aff.dtau * aff.dkappa;
      Direction dir;
      if (!newton_direction(eta2, eta_tk, -rp, -rd, -rg, &dir)) {
        fail(sol, "corrector direction solve failed");
        return;
      }

      const double alpha = std::min(1.0, opt_.step_scale * step_to_boundary(dir));
      sol->trace.back().step = alpha;
      if (alpha < 1e-10) {
        if (++stalled >= 3) {
          fail(sol, "step size collapsed");
          return;
        }
      } else {
        stalled = 0;
      }

      x_ += alpha * dir.dx;
      y_ += alpha * dir.dy;
      z_ += alpha * dir.dz;
      tau_ += alpha * dir.dtau;
      kappa_ += alpha * dir.dkappa;
    }
    sol->iterations = opt_.max_iter;
    conclude(sol, SdpStatus::MaxIter, "iteration limit reached");
  }

  void restore_best() {
    if (!best_.set) return;
    x_ = best_.x;
    y_ = best_.y;
    z_ = best_.z;
    tau_ = best_.tau;
    kappa_ = best_.kappa;
  }

  bool best_meets_tol(double factor) const {
    return best_.set && best_.pres <= factor * opt_.feas_tol &&
           best_.dres <= factor * opt_.feas_tol && best_.gap <= factor * opt_.gap_tol;
  }

  // Ends the run on the best iterate seen. Within the strict tolerances the
  // run converged no matter how it stopped; within the relaxed ones it still
  // counts as optimal, since the caller re-derives residuals from raw problem
  // data either way. Only otherwise does the fallback status apply.
  void conclude(SdpSolution* sol, SdpStatus fallback, const std::string& message) {
    restore_best();
    if (best_meets_tol(1.0)) {
      finish(sol, SdpStatus::Optimal, "converged", 1.0 / tau_, 1.0);
      return;
    }
    if (best_meets_tol(opt_.relaxed_tol_factor)) {
      finish(sol, SdpStatus::Optimal, message + "; accepted at relaxed tolerance", 1.0 / tau_,
             1.0);
      return;
    }
    finish(sol, fallback, message, 1.0 / tau_, 1.0);
  }

  void fail(SdpSolution* sol, const std::string& message) {
    conclude(sol, SdpStatus::NumericalFailure, message);
  }

  // An infeasibility certificate is accepted once it is clean relative to the
  // magnitude it certifies.
  bool detect_infeasible(SdpSolution* sol) {
    const double by = b_.dot(y_);
    if (by > 0) {
      const Eigen::VectorXd v = a_.transpose() * y_ + z_;
      if (v.lpNorm<Eigen::Infinity>() <= opt_.feas_tol * by) {
        finish(sol, SdpStatus::Infeasible, "primal infeasible: dual improving ray found",
               1.0 / by, 0.0);
        return true;
      }
    }
    const double cx = -c_.dot(x_);
    if (cx > 0) {
      const Eigen::VectorXd v = a_ * x_;
      if (v.lpNorm<Eigen::Infinity>() <= opt_.feas_tol * cx) {
        finish(sol, SdpStatus::Infeasible, "dual infeasible: primal improving ray found",
               1.0 / cx, 0.0);
        return true;
      }
    }
    return false;
  }

  void finish(SdpSolution* sol, SdpStatus status, const std::string& message, double inv_tau,
              double dual_theta) {
    sol->status = status;
    sol->message = message;
    if (!std::isfinite(inv_tau)) inv_tau = 0;
    extract_point(sol, inv_tau);
    recover_pin_duals(sol, dual_theta);
    attach_residuals(sol);
  }

  // De-homogenizes the iterate, undoes the presolve row scaling and expands
  // the free-variable substitution.
  void extract_point(SdpSolution* sol, double inv_tau) const {
    const SdpLayout& lay = orig_.layout;
    sol->blocks.clear();
    sol->dual_blocks.clear();
    for (int k = 0; k < nblocks_; ++k) {
      sol->blocks.push_back(smat(block_seg(x_, k)) * inv_tau);
      sol->dual_blocks.push_back(smat(block_seg(z_, k)) * inv_tau);
    }
    Eigen::VectorXd u;
    if (nfree_ > 0) u = x_.tail(nfree_) * inv_tau;
    sol->free_vals = Eigen::VectorXd::Zero(nfree_orig_);
    for (int k = 0; k < nfree_; ++k) sol->free_vals[nonpivot_cols_[k]] = u[k];
    for (std::size_t j = 0; j < pivot_cols_.size(); ++j) {
      double v = dsub_[j];
      for (int k = 0; k < nfree_; ++k) v -= esub_(static_cast<int>(j), k) * u[k];
      sol->free_vals[pivot_cols_[j]] = v;
    }
    sol->y = Eigen::VectorXd::Zero(orig_.rows());
    for (int r = 0; r < q_; ++r)
      sol->y[kept_rows_[r]] = y_[r] * row_scale_[kept_rows_[r]] * inv_tau;
  }

  // Multipliers for the substituted free-only rows: solve the free-column
  // stationarity condition for them in the least-squares sense.
  void recover_pin_duals(SdpSolution* sol, double theta) const {
    if (!has_pins_) return;
    const Eigen::VectorXd v = orig_.a.transpose() * sol->y;
    const Eigen::VectorXd s =
        theta * orig_.c.tail(nfree_orig_) - v.tail(nfree_orig_);
    const Eigen::VectorXd y1 =
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(af1_.transpose()).solve(s);
    for (std::size_t j = 0; j < pinned_rows_.size(); ++j)
      sol->y[pinned_rows_[j]] = y1[static_cast<int>(j)];
  }

  void attach_residuals(SdpSolution* sol) const {
    sol->residuals = sdp_residuals(orig_, *sol);
    Eigen::VectorXd x(orig_.cols());
    const SdpLayout& lay = orig_.layout;
    for (int k = 0; k < nblocks_; ++k)
      x.segment(lay.offsets[k], svec_size(lay.dims[k])) = svec(sol->blocks[k]);
    if (nfree_orig_ > 0) x.tail(nfree_orig_) = sol->free_vals;
    sol->primal_obj = orig_.c.dot(x);
    sol->dual_obj = orig_.b.dot(sol->y);
  }
};

}  // namespace sdp_detail

inline SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opt = {}) {
  sdp_detail::HsdSolver solver(prob, opt);
  return solver.solve();
}

}  // namespace sosstab
