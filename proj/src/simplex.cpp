#include "dictcert/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dictcert/errors.hpp"

namespace dictcert {

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kModule = "tangent";
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;

class BoundedSimplex {
 public:
  BoundedSimplex(const LpProblem& pr, const LpOptions& opts)
      : a_(pr.a), b_(pr.b), opts_(opts), rows_(pr.a.rows()), ncols_(pr.a.cols()),
        total_(ncols_ + rows_) {
    lo_.resize(total_);
    up_.resize(total_);
    lo_.head(ncols_) = pr.lower;
    up_.head(ncols_) = pr.upper;
    lo_.tail(rows_).setZero();
    up_.tail(rows_).setConstant(kInf);
    cost_ = Vector::Zero(total_);
    x_ = Vector::Zero(total_);
    state_.assign(static_cast<std::size_t>(total_), State::lower);
    pos_.assign(static_cast<std::size_t>(total_), -1);
    block_ = std::max<Index>(512, ncols_ / 8);
  }

  LpResult run(const Vector& c) {
    LpResult res;
    for (Index j = 0; j < ncols_; ++j) {
      bool upper = !opts_.start_at_upper.empty() && opts_.start_at_upper[static_cast<std::size_t>(j)] &&
                   std::isfinite(up_(j));
      state_[static_cast<std::size_t>(j)] = upper ? State::upper : State::lower;
      x_(j) = upper ? up_(j) : lo_(j);
    }
    Vector r = b_ - a_ * x_.head(ncols_);
    art_sign_.resize(rows_);
    basis_.resize(static_cast<std::size_t>(rows_));
    binv_ = Matrix::Zero(rows_, rows_);
    for (Index i = 0; i < rows_; ++i) {
      art_sign_(i) = r(i) >= 0 ? 1.0 : -1.0;
      Index v = ncols_ + i;
      x_(v) = std::abs(r(i));
      basis_[static_cast<std::size_t>(i)] = v;
      pos_[static_cast<std::size_t>(v)] = static_cast<int>(i);
      state_[static_cast<std::size_t>(v)] = State::basic;
      binv_(i, i) = art_sign_(i);
    }

    // Phase one.
    cost_.setZero();
    cost_.tail(rows_).setOnes();
    LpStatus st = iterate();
    res.iterations = iterations_;
    res.infeasibility = x_.tail(rows_).sum();
    if (st == LpStatus::iteration_limit) {
      res.status = st;
      return finish(res);
    }
    const double scale = 1.0 + (b_.size() ? b_.cwiseAbs().maxCoeff() : 0.0);
    if (res.infeasibility > opts_.feas_tol * scale) {
      res.status = LpStatus::infeasible;
      return finish(res);
    }
    up_.tail(rows_).setZero();
    drive_out_artificials();
    if (opts_.feasibility_only) {
      cost_.setZero();
      res.status = LpStatus::optimal;
      return finish(res);
    }

    // Phase two.
    cost_.head(ncols_) = c;
    cost_.tail(rows_).setZero();
    degenerate_run_ = 0;
    st = iterate();
    res.iterations = iterations_;
    res.status = st;
    return finish(res);
  }

 private:
  enum class State : unsigned char { basic, lower, upper };

  void column(Index j, Vector& out) const {
    if (j < ncols_) {
      out = a_.col(j);
    } else {
      out = Vector::Zero(rows_);
      out(j - ncols_) = art_sign_(j - ncols_);
    }
  }

  Vector duals() const {
    Vector cb(rows_);
    for (Index i = 0; i < rows_; ++i) cb(i) = cost_(basis_[static_cast<std::size_t>(i)]);
    return binv_.transpose() * cb;
  }

  void refactor() {
    Matrix bm(rows_, rows_);
    Vector col;
    for (Index i = 0; i < rows_; ++i) {
      column(basis_[static_cast<std::size_t>(i)], col);
      bm.col(i) = col;
    }
    Eigen::PartialPivLU<Matrix> lu(bm);
    binv_ = lu.inverse();
    Vector rhs = b_;
    for (Index j = 0; j < total_; ++j) {
      if (state_[static_cast<std::size_t>(j)] == State::basic || x_(j) == 0.0) continue;
      if (j < ncols_) {
        rhs -= a_.col(j) * x_(j);
      } else {
        rhs(j - ncols_) -= art_sign_(j - ncols_) * x_(j);
      }
    }
    Vector xb = binv_ * rhs;
    for (Index i = 0; i < rows_; ++i) x_(basis_[static_cast<std::size_t>(i)]) = xb(i);
  }

  bool eligible(Index j, double d) const {
    State s = state_[static_cast<std::size_t>(j)];
    if (s == State::basic || !(up_(j) > lo_(j))) return false;
    return (s == State::lower && d < -opts_.opt_tol) || (s == State::upper && d > opts_.opt_tol);
  }

  // Entering variable or -1 when optimal. Artificials never re-enter.
  Index price(const Vector& y, double* dq) {
    if (bland_) {
      for (Index j = 0; j < ncols_; ++j) {
        if (state_[static_cast<std::size_t>(j)] == State::basic) continue;
        double d = cost_(j) - a_.col(j).dot(y);
        if (eligible(j, d)) {
          *dq = d;
          return j;
        }
      }
      return -1;
    }
    Index scanned = 0;
    while (scanned < ncols_) {
      Index start = offset_;
      Index len = std::min(block_, ncols_ - start);
      Vector d = cost_.segment(start, len) - a_.middleCols(start, len).transpose() * y;
      Index best = -1;
      double best_abs = 0.0;
      for (Index t = 0; t < len; ++t) {
        if (eligible(start + t, d(t)) && std::abs(d(t)) > best_abs) {
          best_abs = std::abs(d(t));
          best = start + t;
          *dq = d(t);
        }
      }
      scanned += len;
      offset_ = (start + len) % ncols_;
      if (best >= 0) return best;
    }
    return -1;
  }

  LpStatus iterate() {
    Vector alpha;
    Vector col;
    for (;;) {
      if (iterations_ >= opts_.max_iter) return LpStatus::iteration_limit;
      if (since_refactor_ >= opts_.refactor_every) {
        refactor();
        since_refactor_ = 0;
      }
      Vector y = duals();
      double dq = 0.0;
      Index q = price(y, &dq);
      if (q < 0) {
        if (bland_ || since_refactor_ == 0) return LpStatus::optimal;
        // Confirm optimality on a fresh factorization.
        refactor();
        since_refactor_ = 0;
        continue;
      }
      ++iterations_;
      ++since_refactor_;
      const double dir = dq < 0 ? 1.0 : -1.0;
      column(q, col);
      alpha = binv_ * col;

      // Harris ratio test.
      double theta_max = kInf;
      for (Index r = 0; r < rows_; ++r) {
        double delta = dir * alpha(r);
        Index v = basis_[static_cast<std::size_t>(r)];
        if (delta > kPivotTol) {
          theta_max = std::min(theta_max, (x_(v) - lo_(v) + opts_.feas_tol) / delta);
        } else if (delta < -kPivotTol && std::isfinite(up_(v))) {
          theta_max = std::min(theta_max, (up_(v) - x_(v) + opts_.feas_tol) / -delta);
        }
      }
      const double range = up_(q) - lo_(q);
      if (!std::isfinite(theta_max) && !std::isfinite(range)) return LpStatus::unbounded;

      Index leave = -1;
      double theta = kInf;
      if (std::isfinite(theta_max)) {
        double best_piv = 0.0;
        Index best_var = std::numeric_limits<Index>::max();
        double best_ratio = kInf;
        for (Index r = 0; r < rows_; ++r) {
          double delta = dir * alpha(r);
          Index v = basis_[static_cast<std::size_t>(r)];
          double ratio;
          if (delta > kPivotTol) {
            ratio = (x_(v) - lo_(v)) / delta;
          } else if (delta < -kPivotTol && std::isfinite(up_(v))) {
            ratio = (up_(v) - x_(v)) / -delta;
          } else {
            continue;
          }
          if (bland_) {
            if (ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && v < best_var)) {
              best_ratio = ratio;
              best_var = v;
              leave = r;
            }
          } else if (ratio <= theta_max && std::abs(delta) > best_piv) {
            best_piv = std::abs(delta);
            leave = r;
            best_ratio = ratio;
          }
        }
        theta = std::max(0.0, best_ratio);
      }

      if (range <= theta) {
        // Bound flip, basis unchanged.
        for (Index r = 0; r < rows_; ++r) x_(basis_[static_cast<std::size_t>(r)]) -= dir * range * alpha(r);
        bool to_upper = state_[static_cast<std::size_t>(q)] == State::lower;
        state_[static_cast<std::size_t>(q)] = to_upper ? State::upper : State::lower;
        x_(q) = to_upper ? up_(q) : lo_(q);
        degenerate_run_ = 0;
        bland_ = false;
        continue;
      }

      for (Index r = 0; r < rows_; ++r) x_(basis_[static_cast<std::size_t>(r)]) -= dir * theta * alpha(r);
      x_(q) += dir * theta;
      Index out = basis_[static_cast<std::size_t>(leave)];
      bool out_lower = dir * alpha(leave) > 0;
      x_(out) = out_lower ? lo_(out) : up_(out);
      state_[static_cast<std::size_t>(out)] = out_lower ? State::lower : State::upper;
      pos_[static_cast<std::size_t>(out)] = -1;
      if (out >= ncols_) up_(out) = 0.0;  // a departed artificial stays at zero
      basis_[static_cast<std::size_t>(leave)] = q;
      pos_[static_cast<std::size_t>(q)] = static_cast<int>(leave);
      state_[static_cast<std::size_t>(q)] = State::basic;

      double piv = alpha(leave);
      Eigen::RowVectorXd prow = binv_.row(leave) / piv;
      binv_.noalias() -= alpha * prow;
      binv_.row(leave) = prow;

      if (theta <= 1e-12) {
        if (++degenerate_run_ > 50) bland_ = true;
      } else {
        degenerate_run_ = 0;
        bland_ = false;
      }
    }
  }

  void drive_out_artificials() {
    Vector col;
    for (Index r = 0; r < rows_; ++r) {
      Index v = basis_[static_cast<std::size_t>(r)];
      if (v < ncols_) continue;
      Eigen::RowVectorXd rho = binv_.row(r);
      Eigen::RowVectorXd piv_row = rho * a_;
      Index best = -1;
      double best_abs = 1e-9;
      for (Index j = 0; j < ncols_; ++j) {
        if (state_[static_cast<std::size_t>(j)] == State::basic) continue;
        if (std::abs(piv_row(j)) > best_abs) {
          best_abs = std::abs(piv_row(j));
          best = j;
        }
      }
      if (best < 0) continue;  // redundant row; the artificial stays basic at zero
      column(best, col);
      Vector alpha = binv_ * col;
      // Degenerate pivot: the entering variable keeps its bound value.
      x_(v) = 0.0;
      state_[static_cast<std::size_t>(v)] = State::lower;
      pos_[static_cast<std::size_t>(v)] = -1;
      basis_[static_cast<std::size_t>(r)] = best;
      pos_[static_cast<std::size_t>(best)] = static_cast<int>(r);
      state_[static_cast<std::size_t>(best)] = State::basic;
      Eigen::RowVectorXd prow = binv_.row(r) / alpha(r);
      binv_.noalias() -= alpha * prow;
      binv_.row(r) = prow;
    }
    refactor();
    since_refactor_ = 0;
  }

  LpResult finish(LpResult res) {
    res.x = x_.head(ncols_);
    res.duals = duals();
    res.reduced = cost_.head(ncols_) - a_.transpose() * res.duals;
    res.objective = cost_.head(ncols_).dot(res.x);
    res.iterations = iterations_;
    return res;
  }

  const Matrix& a_;
  const Vector& b_;
  LpOptions opts_;
  Index rows_, ncols_, total_;
  Vector lo_, up_, cost_, x_, art_sign_;
  std::vector<State> state_;
  std::vector<int> pos_;
  std::vector<Index> basis_;
  Matrix binv_;
  Index block_ = 512;
  Index offset_ = 0;
  int iterations_ = 0;
  int since_refactor_ = 0;
  int degenerate_run_ = 0;
  bool bland_ = false;
};

}  // namespace

LpResult solve_lp(const LpProblem& pr, const LpOptions& opts) {
  const Index rows = pr.a.rows(), cols = pr.a.cols();
  if (pr.b.size() != rows || pr.c.size() != cols || pr.lower.size() != cols ||
      pr.upper.size() != cols) {
    throw ValidationError(kModule, "linear program has inconsistent dimensions");
  }
  if (!opts.start_at_upper.empty() && static_cast<Index>(opts.start_at_upper.size()) != cols) {
    throw ValidationError(kModule, "start_at_upper has the wrong length");
  }
  for (Index j = 0; j < cols; ++j) {
    if (!std::isfinite(pr.lower(j)) || pr.upper(j) < pr.lower(j)) {
      throw ValidationError(kModule, "variable " + std::to_string(j) + " has invalid bounds");
    }
  }
  BoundedSimplex s(pr, opts);
  return s.run(pr.c);
}

}  // namespace dictcert
