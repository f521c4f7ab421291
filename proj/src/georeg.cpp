#include "cityalign/georeg.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/LU>
#include <Eigen/SparseCholesky>

namespace cityalign {

namespace {

struct CellWeights {
  int i = 0, j = 0;
  double t = 0.0, s = 0.0;
};

CellWeights locate(const GridSpec& g, const Vec2& x) {
  if (!g.contains(x)) throw DomainError("point lies outside the deformation grid");
  const Vec2 f = (x - g.origin) / g.cell;
  CellWeights c;
  c.i = std::clamp(static_cast<int>(std::floor(f.x())), 0, g.nx - 2);
  c.j = std::clamp(static_cast<int>(std::floor(f.y())), 0, g.ny - 2);
  c.t = std::clamp(f.x() - c.i, 0.0, 1.0);
  c.s = std::clamp(f.y() - c.j, 0.0, 1.0);
  return c;
}

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

SpMat interpolation_matrix(const GridSpec& g, const std::vector<ControlPair>& pairs) {
  std::vector<Triplet> trips;
  trips.reserve(pairs.size() * 4);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto c = locate(g, pairs[k].x_cad);
    const int r = static_cast<int>(k);
    trips.emplace_back(r, g.node_index(c.i, c.j), (1 - c.t) * (1 - c.s));
    trips.emplace_back(r, g.node_index(c.i + 1, c.j), c.t * (1 - c.s));
    trips.emplace_back(r, g.node_index(c.i, c.j + 1), (1 - c.t) * c.s);
    trips.emplace_back(r, g.node_index(c.i + 1, c.j + 1), c.t * c.s);
  }
  SpMat a(static_cast<int>(pairs.size()), g.node_count());
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

[[maybe_unused]] Eigen::MatrixX2d values_matrix(const std::vector<Vec2>& values) {
  Eigen::MatrixX2d m(values.size(), 2);
  for (std::size_t n = 0; n < values.size(); ++n) m.row(static_cast<Eigen::Index>(n)) = values[n].transpose();
  return m;
}

}  // namespace

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw DomainError("deformation grid needs at least 2x2 nodes");
  if (!(cell > 0.0) || !std::isfinite(cell)) throw DomainError("grid cell size must be positive");
  if (!origin.allFinite()) throw DomainError("grid origin must be finite");
}

bool GridSpec::contains(const Vec2& x) const {
  const double tol = 1e-9 * cell;
  const Vec2 hi = extent_max();
  return x.x() >= origin.x() - tol && x.y() >= origin.y() - tol && x.x() <= hi.x() + tol && x.y() <= hi.y() + tol;
}

void DeformationField::validate() const {
  grid.validate();
  if (values.size() != static_cast<std::size_t>(grid.node_count())) {
    throw DomainError("field value count does not match grid size");
  }
  for (const auto& v : values) {
    if (!v.allFinite()) throw DomainError("field contains non-finite values");
  }
}

GridSpec default_grid(const std::vector<ControlPair>& pairs, double cell) {
  if (pairs.empty()) throw DomainError("cannot size a grid without control pairs");
  Vec2 lo = pairs.front().x_cad, hi = lo;
  for (const auto& p : pairs) {
    lo = lo.cwiseMin(p.x_cad);
    hi = hi.cwiseMax(p.x_cad);
  }
  double diag = (hi - lo).norm();
  if (!(diag > 0.0)) diag = 1.0;
  GridSpec g;
  g.cell = cell > 0.0 ? cell : diag / 32.0;
  g.origin = lo - Vec2::Constant(g.cell);
  g.nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / g.cell)) + 3;
  g.ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / g.cell)) + 3;
  return g;
}

Vec2 warp(const DeformationField& field, const Vec2& x_cad) {
  const auto c = locate(field.grid, x_cad);
  return (1 - c.t) * (1 - c.s) * field.at(c.i, c.j) + c.t * (1 - c.s) * field.at(c.i + 1, c.j) +
         (1 - c.t) * c.s * field.at(c.i, c.j + 1) + c.t * c.s * field.at(c.i + 1, c.j + 1);
}

Eigen::Matrix2d warp_jacobian(const DeformationField& field, const Vec2& x_cad) {
  const auto c = locate(field.grid, x_cad);
  const Vec2& v00 = field.at(c.i, c.j);
  const Vec2& v10 = field.at(c.i + 1, c.j);
  const Vec2& v01 = field.at(c.i, c.j + 1);
  const Vec2& v11 = field.at(c.i + 1, c.j + 1);
  Eigen::Matrix2d j;
  j.col(0) = ((1 - c.s) * (v10 - v00) + c.s * (v11 - v01)) / field.grid.cell;
  j.col(1) = ((1 - c.t) * (v01 - v00) + c.t * (v11 - v10)) / field.grid.cell;
  return j;
}

DeformationField identity_field(const GridSpec& grid) {
  grid.validate();
  DeformationField f;
  f.grid = grid;
  f.values.resize(grid.node_count());
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) f.values[grid.node_index(i, j)] = grid.node(i, j);
  }
  return f;
}

SpMat laplacian_operator(const GridSpec& g) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(g.node_count()) * 6);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int row = g.node_index(i, j);
      if (g.nx >= 3) {
        const int c = std::clamp(i, 1, g.nx - 2);
        trips.emplace_back(row, g.node_index(c - 1, j), 1.0);
        trips.emplace_back(row, g.node_index(c, j), -2.0);
        trips.emplace_back(row, g.node_index(c + 1, j), 1.0);
      }
      if (g.ny >= 3) {
        const int c = std::clamp(j, 1, g.ny - 2);
        trips.emplace_back(row, g.node_index(i, c - 1), 1.0);
        trips.emplace_back(row, g.node_index(i, c), -2.0);
        trips.emplace_back(row, g.node_index(i, c + 1), 1.0);
      }
    }
  }
  SpMat l(g.node_count(), g.node_count());
  l.setFromTriplets(trips.begin(), trips.end());
  return l;
}

double data_term(const DeformationField& field, const std::vector<ControlPair>& pairs) {
  double sum = 0.0;
  for (const auto& p : pairs) sum += (warp(field, p.x_cad) - p.x_wgs).squaredNorm();
  return sum;
}

double smoothness_term(const DeformationField& field) {
  const SpMat l = laplacian_operator(field.grid);
  const Eigen::MatrixX2d lv = l * values_matrix(field.values);
  return lv.squaredNorm();
}

DeformationField fit_field(const std::vector<ControlPair>& pairs, const GridSpec& grid, double lambda,
                           FitReport* report) {
  grid.validate();
  if (pairs.empty()) throw InsufficientDataError("fit_field needs at least one control pair");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be a finite value >= 0");
  for (const auto& p : pairs) {
    if (!p.x_cad.allFinite() || !p.x_wgs.allFinite()) throw DomainError("control pair has non-finite coordinates");
  }

  const int n = grid.node_count();
  const SpMat a = interpolation_matrix(grid, pairs);
  const SpMat l = laplacian_operator(grid);

  if (lambda == 0.0) {
    Eigen::VectorXd weight = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < a.outerSize(); ++k) {
      for (SpMat::InnerIterator it(a, k); it; ++it) weight[it.col()] += std::abs(it.value());
    }
    const auto pinned = (weight.array() > 0.0).count();
    if (static_cast<int>(pairs.size()) < n || pinned < n) {
      throw RankDeficiencyError("lambda = 0 leaves " + std::to_string(n) + " grid nodes constrained by only " +
                                std::to_string(pairs.size()) + " pairs; use lambda > 0");
    }
  }

  Vec2 mean_offset = Vec2::Zero();
  for (const auto& p : pairs) mean_offset += p.x_wgs - p.x_cad;
  mean_offset /= static_cast<double>(pairs.size());

  // Iterate on the offset d from the translated grid x0 = node + mean_offset
  // so that the residuals stay small relative to absolute coordinates.
  Eigen::MatrixX2d x0(n, 2);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) x0.row(grid.node_index(i, j)) = (grid.node(i, j) + mean_offset).transpose();
  }
  const Eigen::MatrixX2d nodes = x0.rowwise() - mean_offset.transpose();
  const Eigen::MatrixX2d interp_nodes = a * nodes;
  Eigen::MatrixX2d e(pairs.size(), 2);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    e.row(r) = (pairs[k].x_wgs - mean_offset).transpose() - interp_nodes.row(r);
  }
  const Eigen::MatrixX2d l_x0 = l * x0;

  const SpMat at = a.transpose();
  const SpMat lt = l.transpose();
  SpMat m = at * a + lambda * (lt * l);
  m.makeCompressed();
  const Eigen::MatrixX2d rhs = at * e - lambda * (lt * l_x0);

  auto objective = [&](const Eigen::MatrixX2d& d) {
    return (a * d - e).squaredNorm() + lambda * (l_x0 + l * d).squaredNorm();
  };

  // A complete sparse LDL^T is cheap at these sizes and keeps CG at a few
  // iterations even when lambda makes the system badly conditioned.
  Eigen::SimplicialLDLT<SpMat> ldlt;
  ldlt.compute(m);
  const bool use_ldlt = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
  Eigen::IncompleteCholesky<double> ic;
  bool use_ic = false;
  if (!use_ldlt) {
    ic.compute(m);
    use_ic = ic.info() == Eigen::Success;
  }
  const Eigen::VectorXd inv_diag = m.diagonal().cwiseMax(1e-300).cwiseInverse();
  auto precondition = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
    if (use_ldlt) return ldlt.solve(r);
    if (use_ic) return ic.solve(r);
    return inv_diag.cwiseProduct(r);
  };

  Eigen::MatrixX2d d = Eigen::MatrixX2d::Zero(n, 2);
  std::vector<double> history{objective(d)};
  const double tol = 1e-12;
  const int max_iter = 20 * n + 200;
  int iterations = 0;

  std::array<Eigen::VectorXd, 2> r, z, p;
  std::array<double, 2> rz{}, bnorm{}, best{};
  std::array<int, 2> stalled{};
  std::array<bool, 2> done{};
  constexpr int kMaxStalled = 10;
  for (int c = 0; c < 2; ++c) {
    r[c] = rhs.col(c);
    z[c] = precondition(r[c]);
    p[c] = z[c];
    rz[c] = r[c].dot(z[c]);
    bnorm[c] = rhs.col(c).norm();
    done[c] = r[c].norm() <= tol * bnorm[c] || bnorm[c] == 0.0;
    best[c] = r[c].norm();
  }
  while (!(done[0] && done[1]) && iterations < max_iter) {
    for (int c = 0; c < 2; ++c) {
      if (done[c]) continue;
      const Eigen::VectorXd mp = m * p[c];
      const double pmp = p[c].dot(mp);
      if (!(pmp > 0.0)) {
        done[c] = true;
        continue;
      }
      const double alpha = rz[c] / pmp;
      d.col(c) += alpha * p[c];
      r[c] -= alpha * mp;
      const double rn = r[c].norm();
      if (rn <= tol * bnorm[c]) {
        done[c] = true;
        continue;
      }
      // Rounding floor reached above the relative tolerance.
      if (rn < best[c]) {
        best[c] = rn;
        stalled[c] = 0;
      } else if (++stalled[c] >= kMaxStalled) {
        done[c] = true;
        continue;
      }
      z[c] = precondition(r[c]);
      const double rz_next = r[c].dot(z[c]);
      p[c] = z[c] + (rz_next / rz[c]) * p[c];
      rz[c] = rz_next;
    }
    ++iterations;
    history.push_back(objective(d));
  }

  DeformationField field;
  field.grid = grid;
  field.values.resize(n);
  const Eigen::MatrixX2d x = x0 + d;
  for (int k = 0; k < n; ++k) field.values[k] = x.row(k).transpose();

  // Gradient of the objective with respect to the table values, accepted
  // when small against the size of the terms it is computed from.
  const Eigen::MatrixX2d gradient = 2.0 * (m * d - rhs);
  const double obj = objective(d);
  double m_norm = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    double row = 0.0;
    for (SpMat::InnerIterator it(m, k); it; ++it) row += std::abs(it.value());
    m_norm = std::max(m_norm, row);
  }
  const double scale = 2.0 * (m_norm * d.norm() + rhs.norm()) + 1.0;
  if (!(gradient.norm() <= 1e-10 * scale)) {
    throw ConvergenceError("deformation fit did not reach the gradient tolerance", 0.0, 0.0, gradient.norm());
  }
  if (report) {
    report->data = (a * d - e).squaredNorm();
    report->smoothness = (l_x0 + l * d).squaredNorm();
    report->objective = obj;
    report->gradient_norm = gradient.norm();
    report->iterations = iterations;
    report->history = std::move(history);
  }
  return field;
}

LambdaSelection select_lambda_cv(const std::vector<ControlPair>& pairs, const GridSpec& grid,
                                 const std::vector<double>& lambda_grid) {
  if (pairs.size() < 2) throw InsufficientDataError("cross-validation needs at least two control pairs");
  if (lambda_grid.empty()) throw DomainError("lambda grid is empty");

  LambdaSelection sel;
  sel.cv_errors.resize(lambda_grid.size());
  sel.held_out.resize(lambda_grid.size());
  std::vector<ControlPair> train;
  train.reserve(pairs.size() - 1);
  for (std::size_t c = 0; c < lambda_grid.size(); ++c) {
    double sum = 0.0;
    sel.held_out[c].resize(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      train.clear();
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        if (q != k) train.push_back(pairs[q]);
      }
      const auto field = fit_field(train, grid, lambda_grid[c]);
      const double e = (warp(field, pairs[k].x_cad) - pairs[k].x_wgs).norm();
      sel.held_out[c][k] = e;
      sum += e;
    }
    sel.cv_errors[c] = sum / static_cast<double>(pairs.size());
  }

  const double best_err = *std::min_element(sel.cv_errors.begin(), sel.cv_errors.end());
  const double tie = 1e-9 * (1.0 + best_err);
  bool chosen = false;
  for (std::size_t c = 0; c < lambda_grid.size(); ++c) {
    if (sel.cv_errors[c] <= best_err + tie && (!chosen || lambda_grid[c] > sel.lambda)) {
      sel.lambda = lambda_grid[c];
      chosen = true;
    }
  }
  return sel;
}

Vec2 invert_warp(const DeformationField& field, const Vec2& x_wgs, std::optional<Vec2> x_init,
                 InversionResult* info) {
  const GridSpec& g = field.grid;
  g.validate();
  const Vec2 lo = g.origin, hi = g.extent_max();
  auto clamp_to_grid = [&](Vec2 x) { return x.cwiseMax(lo).cwiseMin(hi); };

  Vec2 x;
  if (x_init) {
    x = clamp_to_grid(*x_init);
  } else {
    const Vec2 center = 0.5 * (lo + hi);
    x = clamp_to_grid(center + (x_wgs - warp(field, center)));
  }

  Vec2 r = warp(field, x) - x_wgs;
  double res = r.norm();
  int it = 0;
  for (; it < 100; ++it) {
    if (res < 1e-9) break;
    const Eigen::Matrix2d j = warp_jacobian(field, x);
    const Eigen::FullPivLU<Eigen::Matrix2d> lu(j);
    if (!lu.isInvertible()) {
      throw ConvergenceError("singular warp Jacobian during inversion", x.x(), x.y(), res);
    }
    const Vec2 step = -lu.solve(r);
    // Backtrack when the full Gauss-Newton step overshoots into a
    // neighboring cell with a different slope.
    double scale = 1.0;
    Vec2 x_next = clamp_to_grid(x + step);
    Vec2 r_next = warp(field, x_next) - x_wgs;
    for (int half = 0; half < 40 && r_next.norm() >= res; ++half) {
      scale *= 0.5;
      x_next = clamp_to_grid(x + scale * step);
      r_next = warp(field, x_next) - x_wgs;
    }
    const double moved = (x_next - x).norm();
    x = x_next;
    r = r_next;
    res = r.norm();
    if (moved < 1e-9) {
      ++it;
      break;
    }
  }
  if (info) {
    info->x = x;
    info->residual = res;
    info->iterations = it;
  }
  if (!(res < 1e-6)) {
    throw ConvergenceError("inverse warp did not converge (residual " + std::to_string(res) + " m)", x.x(), x.y(),
                           res);
  }
  return x;
}

Vec2 GeoReference::to_local(double lat, double lon) const {
  return {kEarthRadius * std::cos(deg2rad(lat0)) * deg2rad(lon - lon0), kEarthRadius * deg2rad(lat - lat0)};
}

void GeoReference::to_geodetic(const Vec2& local, double& lat, double& lon) const {
  lat = lat0 + rad2deg(local.y() / kEarthRadius);
  lon = lon0 + rad2deg(local.x() / (kEarthRadius * std::cos(deg2rad(lat0))));
}

GeoReference centroid_reference(const std::vector<GeodeticPair>& pairs) {
  if (pairs.empty()) throw DomainError("no geodetic pairs");
  GeoReference ref;
  for (const auto& p : pairs) {
    ref.lat0 += p.lat;
    ref.lon0 += p.lon;
  }
  ref.lat0 /= static_cast<double>(pairs.size());
  ref.lon0 /= static_cast<double>(pairs.size());
  return ref;
}

std::vector<ControlPair> to_local_pairs(const std::vector<GeodeticPair>& pairs, const GeoReference& ref) {
  std::vector<ControlPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.x_cad, ref.to_local(p.lat, p.lon)});
  return out;
}

}  // namespace cityalign
