#include "mziln/composition.hpp"

#include <algorithm>
#include <cmath>

#include "mziln/errors.hpp"

namespace mziln {

CompositionSample CompositionSample::from_values(Eigen::VectorXd v) {
  if (v.size() < 2) throw InvalidInput("composition needs at least two taxa");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!std::isfinite(v[k]) || v[k] < 0.0)
      throw InvalidInput("composition entries must be finite and nonnegative");
    sum += v[k];
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw InvalidInput("composition does not sum to 1");
  v /= sum;
  CompositionSample sample;
  sample.presence.resize(static_cast<std::size_t>(v.size()));
  bool any = false;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    sample.presence[static_cast<std::size_t>(k)] = v[k] > 0.0;
    any = any || v[k] > 0.0;
  }
  if (!any) throw InvalidInput("composition has no positive entry");
  sample.values = std::move(v);
  return sample;
}

int CompositionSample::n_present() const {
  return static_cast<int>(std::count(presence.begin(), presence.end(), true));
}

Eigen::MatrixXd SubcompositionTransform::dense_matrix() const {
  const int l_count = order();
  const int k_dim = n_taxa - 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(l_count - 1, k_dim);
  const int last = last_nonzero();
  for (int l = 0; l < l_count - 1; ++l) a(l, nonzero_indices[static_cast<std::size_t>(l)] - 1) = 1.0;
  if (last != n_taxa) a.col(last - 1).setConstant(-1.0);
  return a;
}

Eigen::VectorXd SubcompositionTransform::apply(const Eigen::VectorXd& u_full) const {
  const int l_count = order();
  Eigen::VectorXd out(l_count - 1);
  const int last = last_nonzero();
  const double u_last = (last == n_taxa) ? 0.0 : u_full[last - 1];
  for (int l = 0; l < l_count - 1; ++l)
    out[l] = u_full[nonzero_indices[static_cast<std::size_t>(l)] - 1] - u_last;
  return out;
}

Eigen::MatrixXd SubcompositionTransform::conjugate(const Eigen::MatrixXd& s) const {
  const int l_count = order();
  const int last = last_nonzero();
  Eigen::MatrixXd out(l_count - 1, l_count - 1);
  const bool drop_last = last == n_taxa;
  const double s_ll = drop_last ? 0.0 : s(last - 1, last - 1);
  for (int a = 0; a < l_count - 1; ++a) {
    const int ka = nonzero_indices[static_cast<std::size_t>(a)] - 1;
    for (int b = a; b < l_count - 1; ++b) {
      const int kb = nonzero_indices[static_cast<std::size_t>(b)] - 1;
      double v = s(ka, kb);
      if (!drop_last) v += s_ll - s(ka, last - 1) - s(last - 1, kb);
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

Eigen::MatrixXd SubcompositionTransform::conjugate_adjoint(const Eigen::MatrixXd& t) const {
  const int rows = order() - 1;
  if (t.rows() != rows || t.cols() != rows)
    throw InvalidInput("conjugate_adjoint: matrix does not match the transform order");
  const int k_dim = n_taxa - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k_dim, k_dim);
  const bool ref_block = !reference_is_last();
  const int ref = last_nonzero() - 1;
  for (int a = 0; a < rows; ++a) {
    const int ka = nonzero_indices[static_cast<std::size_t>(a)] - 1;
    for (int b = 0; b < rows; ++b) {
      const int kb = nonzero_indices[static_cast<std::size_t>(b)] - 1;
      out(ka, kb) += t(a, b);
    }
    if (ref_block) {
      out(ka, ref) -= t.row(a).sum();
      out(ref, ka) -= t.col(a).sum();
    }
  }
  if (ref_block) out(ref, ref) += t.sum();
  return out;
}

std::pair<SubcompositionTransform, Eigen::VectorXd> log_ratio_transform(
    const CompositionSample& sample) {
  SubcompositionTransform transform;
  transform.n_taxa = sample.n_taxa();
  transform.reference_index = sample.n_taxa();
  for (int k = 0; k < sample.n_taxa(); ++k)
    if (sample.presence[static_cast<std::size_t>(k)]) transform.nonzero_indices.push_back(k + 1);
  if (transform.order() < 2)
    throw DegenerateSample("sample has fewer than two nonzero taxa");
  const int l_count = transform.order();
  const double ref_value = sample.values[transform.last_nonzero() - 1];
  Eigen::VectorXd u(l_count - 1);
  for (int l = 0; l < l_count - 1; ++l) {
    const int k = transform.nonzero_indices[static_cast<std::size_t>(l)] - 1;
    u[l] = std::log(sample.values[k] / ref_value);
  }
  return {std::move(transform), std::move(u)};
}

CompositionSample inverse_log_ratio(const Eigen::VectorXd& u) {
  for (Eigen::Index k = 0; k < u.size(); ++k)
    if (!std::isfinite(u[k])) throw InvalidInput("inverse_log_ratio: non-finite input");
  // Softmax with an implicit 0 entry for the reference; shift for stability.
  const double shift = std::max(0.0, u.size() > 0 ? u.maxCoeff() : 0.0);
  Eigen::VectorXd values(u.size() + 1);
  double denom = std::exp(-shift);
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    values[k] = std::exp(u[k] - shift);
    denom += values[k];
  }
  values[u.size()] = std::exp(-shift);
  values /= denom;
  return CompositionSample::from_values(std::move(values));
}

CompositionSample subcomposition(const CompositionSample& sample,
                                 const std::vector<int>& indices) {
  if (indices.empty()) throw InvalidInput("subcomposition: empty index set");
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  Eigen::VectorXd sub(static_cast<Eigen::Index>(sorted.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const int k = sorted[i];
    if (k < 1 || k > sample.n_taxa()) throw InvalidInput("subcomposition: index out of range");
    sub[static_cast<Eigen::Index>(i)] = sample.values[k - 1];
    total += sample.values[k - 1];
  }
  if (total <= 0.0) throw DegenerateSample("subcomposition: all indexed values are zero");
  sub /= total;
  return CompositionSample::from_values(std::move(sub));
}

Eigen::VectorXd baseline_composition(const Eigen::VectorXd& intercepts) {
  return inverse_log_ratio(intercepts).values;
}

CovariateShift covariate_shift(const Eigen::VectorXd& slopes) {
  CovariateShift out;
  out.shift = baseline_composition(slopes);
  const double neutral = 1.0 / static_cast<double>(out.shift.size());
  out.signs.resize(static_cast<std::size_t>(out.shift.size()), 0);
  for (Eigen::Index k = 0; k < out.shift.size(); ++k) {
    if (out.shift[k] > neutral + 1e-12)
      out.signs[static_cast<std::size_t>(k)] = 1;
    else if (out.shift[k] < neutral - 1e-12)
      out.signs[static_cast<std::size_t>(k)] = -1;
  }
  return out;
}

double disturbance_magnitude(const Eigen::VectorXd& slopes) {
  for (Eigen::Index k = 0; k < slopes.size(); ++k)
    if (!std::isfinite(slopes[k])) throw InvalidInput("disturbance_magnitude: non-finite input");
  const double total = slopes.sum();
  const double k_plus_1 = static_cast<double>(slopes.size() + 1);
  const double quad = slopes.squaredNorm() - total * total / k_plus_1;
  return std::sqrt(std::max(0.0, quad));
}

}  // namespace mziln
