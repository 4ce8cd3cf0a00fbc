#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace tminfer {

using Eigen::Index;

/// Natural parameters of the conditional Gaussian of one site:
///   P(I_i | rest) ∝ exp(-a I_i^2 + B_i I_i),   B_i = sum_{j != i} k_j I_j.
/// `k` has one slot per site; the slot of `site` itself is unused and held at 0.
template <typename Scalar>
struct RowParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Index site = 0;
  Scalar a = Scalar(1);
  Vector k;

  static RowParams cold(Index site, Index n) { return RowParams{site, Scalar(1), Vector::Zero(n)}; }
};

using RowParamsd = RowParams<double>;

/// Support of one row. Inactive couplings are pinned to 0.
struct RowMask {
  Index site = 0;
  Eigen::Array<bool, Eigen::Dynamic, 1> active;

  Index count() const { return active.count(); }
  std::vector<Index> indices() const {
    std::vector<Index> idx;
    for (Index j = 0; j < active.size(); ++j)
      if (active(j)) idx.push_back(j);
    return idx;
  }
};

/// Every other site active.
inline RowMask full_mask(Index site, Index n) {
  RowMask m{site, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, true)};
  m.active(site) = false;
  return m;
}

/// Only the first `n_regressors` sites active (the input half for an output row).
inline RowMask prefix_mask(Index site, Index n, Index n_regressors) {
  RowMask m{site, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false)};
  m.active.head(n_regressors).setConstant(true);
  m.active(site) = false;
  return m;
}


template <typename Scalar>
struct RowGradient {
  Scalar da;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dk;
};

namespace detail {

inline void check_mask(Index site, Index n, const RowMask& mask) {
  if (mask.active.size() != n || mask.site != site)
    throw std::invalid_argument("row mask does not match the row");
  if (mask.active(site)) throw std::invalid_argument("row mask activates its own site");
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> masked_k(const RowParams<Scalar>& p, const RowMask& mask) {
  detail::check_mask(p.site, p.k.size(), mask);
  return mask.active.select(p.k, Scalar(0));
}

}  // namespace detail

/// B_i = sum_{j != i} k_j I_j over the concatenated site vector.
template <typename Scalar, typename Derived>
Scalar field_b(const RowParams<Scalar>& p, const Eigen::MatrixBase<Derived>& sites) {
  if (sites.size() != p.k.size()) throw std::invalid_argument("field_b: length mismatch");
  return p.k.dot(sites.template cast<Scalar>()) - p.k(p.site) * Scalar(sites(p.site));
}

/// ln Z for Z = ∫ exp(-a x^2 + b x) dx over the real line:
///   ln 2 + 1/2 ln(pi / 4a) + b^2 / 4a.
template <typename Scalar>
Scalar log_partition(Scalar a, Scalar b) {
  using std::log;
  if (!(a > Scalar(0))) throw std::domain_error("log_partition: curvature must be positive");
  return Scalar(std::numbers::ln2) + Scalar(0.5) * log(Scalar(std::numbers::pi) / (Scalar(4) * a)) +
         b * b / (Scalar(4) * a);
}

/// Negative log-pseudolikelihood of one row, averaged over samples (rows of
/// `sites`, an M x n matrix). Returns +inf for a <= 0.
template <typename Scalar, typename Derived>
Scalar row_neg_logpl(const RowParams<Scalar>& p, const Eigen::MatrixBase<Derived>& sites,
                     const RowMask& mask) {
  if (sites.cols() != p.k.size()) throw std::invalid_argument("row_neg_logpl: site count mismatch");
  const auto k = detail::masked_k(p, mask);
  if (!(p.a > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  const Index m_samples = sites.rows();
  Scalar acc(0);
  for (Index m = 0; m < m_samples; ++m) {
    const Scalar x = Scalar(sites(m, p.site));
    const Scalar b = k.dot(sites.row(m).transpose().template cast<Scalar>());
    acc += x * b - x * x * p.a - log_partition(p.a, b);
  }
  return -acc / Scalar(m_samples);
}

/// Analytic gradient of row_neg_logpl; masked and diagonal components are 0.
template <typename Scalar, typename Derived>
RowGradient<Scalar> row_grad(const RowParams<Scalar>& p, const Eigen::MatrixBase<Derived>& sites,
                             const RowMask& mask) {
  if (sites.cols() != p.k.size()) throw std::invalid_argument("row_grad: site count mismatch");
  const auto k = detail::masked_k(p, mask);
  if (!(p.a > Scalar(0))) throw std::domain_error("row_grad: curvature must be positive");
  const Index m_samples = sites.rows();
  const Index n = sites.cols();
  RowGradient<Scalar> g{Scalar(0), Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n)};
  for (Index m = 0; m < m_samples; ++m) {
    const auto row = sites.row(m).transpose().template cast<Scalar>();
    const Scalar x = row(p.site);
    const Scalar b = k.dot(row);
    const Scalar resid = x - b / (Scalar(2) * p.a);
    g.dk.noalias() -= resid * row;
    g.da += x * x - Scalar(1) / (Scalar(2) * p.a) - b * b / (Scalar(4) * p.a * p.a);
  }
  g.dk /= Scalar(m_samples);
  g.da /= Scalar(m_samples);
  g.dk = mask.active.select(g.dk, Scalar(0));
  return g;
}

/// Sum over samples and fitted rows of the log-pseudolikelihood.
template <typename Scalar, typename Derived>
Scalar total_pl(const std::vector<RowParams<Scalar>>& rows, const Eigen::MatrixBase<Derived>& sites,
                const std::vector<RowMask>& masks) {
  if (rows.size() != masks.size()) throw std::invalid_argument("total_pl: one mask per row");
  Scalar acc(0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    acc -= Scalar(sites.rows()) * row_neg_logpl(rows[r], sites, masks[r]);
  return acc;
}

/// Upper-triangular R with R^T R = S^T S / M for the M x n site matrix S,
/// from a Householder QR of the scaled data. Every row objective reads its
/// second moments through R, so the residual of a near-exact fit is formed
/// as a vector R v rather than by cancelling moment sums.
template <typename Scalar>
class SiteMoments {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SiteMoments() = default;

  template <typename Derived>
  static SiteMoments from_sites(const Eigen::MatrixBase<Derived>& sites) {
    SiteMoments out;
    out.samples_ = sites.rows();
    const Index n = sites.cols();
    Matrix scaled = sites.template cast<Scalar>() / std::sqrt(Scalar(sites.rows()));
    Eigen::HouseholderQR<Matrix> qr(scaled);
    const Index r = std::min(scaled.rows(), n);
    out.r_ = Matrix::Zero(n, n);
    out.r_.topRows(r) = qr.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
    return out;
  }

  const Matrix& factor() const { return r_; }
  Index samples() const { return samples_; }
  Index sites() const { return r_.cols(); }

 private:
  Matrix r_;
  Index samples_ = 0;
};

/// Row objective over the packed variable x = (a, y), evaluated through
/// SiteMoments:
///   f = a (|R v|^2 + floor) + ln 2 + 1/2 ln(pi / 4a),   v = e_i - k / 2a,
/// which equals row_neg_logpl + floor * a. A positive floor bounds a at
/// 1 / (2 floor) when a row is fitted exactly, without moving k / 2a.
/// Points with a <= a_min evaluate to +inf.
///
/// y holds the active couplings in whitened coordinates y = R_m k_m, where
/// Q_m R_m is a QR factor of the active columns of R, so the coupling block
/// of the Hessian is I / 2a however correlated the regressors are. With
///   c = Q_m^T R e_i,  r0^2 = |R e_i|^2 - |c|^2,  w = c - y / 2a
/// the objective reads a (|w|^2 + r0^2 + floor) + ln 2 + 1/2 ln(pi / 4a).
/// Numerically singular active columns fall back to y = k_m.
template <typename Scalar>
class RowObjective {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  RowObjective(const SiteMoments<Scalar>& moments, const RowMask& mask, Scalar variance_floor = 0,
               Scalar a_min = 0)
      : n_(moments.sites()), site_(mask.site), active_(mask.indices()), floor_(variance_floor),
        a_min_(a_min) {
    detail::check_mask(site_, moments.sites(), mask);
    const auto& r = moments.factor();
    const Index p = Index(active_.size());
    Matrix cols(n_, p);
    for (Index j = 0; j < p; ++j) cols.col(j) = r.col(active_[std::size_t(j)]);
    const Vector target = r.col(site_);

    Eigen::HouseholderQR<Matrix> qr(cols);
    const Matrix rm = qr.matrixQR().topRows(std::min(n_, p)).template triangularView<Eigen::Upper>();
    const Vector diag = rm.diagonal().cwiseAbs();
    whitened_ = p > 0 && p <= n_ && diag.minCoeff() > Scalar(1e-8) * diag.maxCoeff();
    if (whitened_) {
      rm_ = rm;
      const Vector qt = qr.householderQ().adjoint() * target;
      c_ = qt.head(p);
      extra_ = qt.tail(n_ - p).squaredNorm();
    } else {
      b_ = std::move(cols);
      c_ = target;
      extra_ = 0;
    }
  }

  Index dimension() const { return Index(active_.size()) + 1; }
  bool whitened() const { return whitened_; }

  Vector pack(const RowParams<Scalar>& p) const {
    Vector x(dimension());
    x(0) = p.a;
    Vector km(dimension() - 1);
    for (std::size_t j = 0; j < active_.size(); ++j) km(Index(j)) = p.k(active_[j]);
    x.tail(km.size()) = whitened_ ? Vector(rm_.template triangularView<Eigen::Upper>() * km) : km;
    return x;
  }

  RowParams<Scalar> unpack(const Vector& x) const {
    RowParams<Scalar> p{site_, x(0), Vector::Zero(n_)};
    Vector km = x.tail(dimension() - 1);
    if (whitened_) rm_.template triangularView<Eigen::Upper>().solveInPlace(km);
    for (std::size_t j = 0; j < active_.size(); ++j) p.k(active_[j]) = km(Index(j));
    return p;
  }

  Scalar operator()(const Vector& x, Vector& grad) const {
    const Scalar a = x(0);
    if (!(a > a_min_) || !x.allFinite()) return std::numeric_limits<Scalar>::infinity();
    const Scalar scale = Scalar(1) / (Scalar(2) * a);
    const auto y = x.tail(dimension() - 1);
    Vector w = whitened_ ? Vector(c_ - y * scale) : Vector(c_ - b_ * (y * scale));

    grad.resize(dimension());
    // d/da: E[(I - B/2a)(I + B/2a)] - 1/2a
    grad(0) = Scalar(2) * w.dot(c_) - w.squaredNorm() + extra_ + floor_ - scale;
    if (whitened_)
      grad.tail(dimension() - 1) = -w;
    else
      grad.tail(dimension() - 1) = -(b_.transpose() * w);

    using std::log;
    return a * (w.squaredNorm() + extra_ + floor_) + Scalar(std::numbers::ln2) +
           Scalar(0.5) * log(Scalar(std::numbers::pi) / (Scalar(4) * a));
  }

  /// row_neg_logpl at x (the floor term removed).
  Scalar neg_logpl(const Vector& x) const {
    Vector g;
    return (*this)(x, g) - floor_ * x(0);
  }

  Index site() const { return site_; }

 private:
  Index n_;
  Index site_;
  std::vector<Index> active_;
  Scalar floor_;
  Scalar a_min_;
  bool whitened_ = false;
  Matrix rm_;
  Matrix b_;
  Vector c_;
  Scalar extra_ = 0;
};

}  // namespace tminfer
