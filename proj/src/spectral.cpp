#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "partopf/graphpart.hpp"

namespace partopf {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Clustering {
  std::vector<std::size_t> label;
  double inertia = std::numeric_limits<double>::infinity();
  bool complete = false;  // every cluster non-empty
};

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& x, std::size_t k, std::mt19937_64& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd dist = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    double total = dist.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc >= r && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
    dist = dist.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

Clustering lloyd(const Eigen::MatrixXd& x, std::size_t k, std::mt19937_64& rng, int max_iter) {
  const auto n = x.rows();
  Eigen::MatrixXd centers = plus_plus_seeds(x, k, rng);
  Clustering out;
  out.label.assign(static_cast<std::size_t>(n), k);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double d = (x.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (out.label[static_cast<std::size_t>(i)] != best) {
        out.label[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> count(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(static_cast<Eigen::Index>(out.label[static_cast<std::size_t>(i)])) += x.row(i);
      ++count[out.label[static_cast<std::size_t>(i)]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        centers.row(static_cast<Eigen::Index>(c)) =
            sum.row(static_cast<Eigen::Index>(c)) / static_cast<double>(count[c]);
      }
    }
  }
  std::vector<std::size_t> count(k, 0);
  out.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = out.label[static_cast<std::size_t>(i)];
    ++count[c];
    out.inertia += (x.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
  }
  out.complete = std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
  return out;
}

}  // namespace

Eigen::MatrixXd build_affinity(const Network& net, AffinityMode mode, const SparseMatrix* hessian) {
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  if (mode == AffinityMode::hessian && hessian == nullptr) {
    throw std::invalid_argument("hessian affinity requires a Hessian");
  }
  AdmittanceMatrix ybus = build_ybus(net);
  Eigen::MatrixXd ya = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < ybus.y.outerSize(); ++c) {
    for (ComplexSparse::InnerIterator it(ybus.y, c); it; ++it) {
      if (it.row() == it.col()) continue;
      ya(it.row(), it.col()) += 0.5 * std::abs(it.value());
      ya(it.col(), it.row()) += 0.5 * std::abs(it.value());
    }
  }
  if (mode == AffinityMode::ybus) return ya;

  OpfProblem layout = build_opf(net);
  if (hessian->rows() != static_cast<Eigen::Index>(layout.size()) ||
      hessian->cols() != hessian->rows()) {
    throw std::invalid_argument("Hessian does not match the OPF layout of the network");
  }
  std::vector<Eigen::Index> owner(layout.size(), 0);
  for (std::size_t i = 0; i < layout.bus_count(); ++i) {
    const BusSlots& s = layout.slots(i);
    owner[s.theta] = owner[s.v] = static_cast<Eigen::Index>(i);
    for (std::size_t idx : s.p) owner[idx] = static_cast<Eigen::Index>(i);
    for (std::size_t idx : s.q) owner[idx] = static_cast<Eigen::Index>(i);
  }
  Eigen::MatrixXd ha = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < hessian->outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(*hessian, c); it; ++it) {
      Eigen::Index bi = owner[static_cast<std::size_t>(it.row())];
      Eigen::Index bk = owner[static_cast<std::size_t>(it.col())];
      if (bi == bk) continue;
      double v = std::abs(it.value());
      ha(bi, bk) = std::max(ha(bi, bk), v);
      ha(bk, bi) = std::max(ha(bk, bi), v);
    }
  }
  double ymax = ya.maxCoeff();
  double hmax = ha.maxCoeff();
  if (ymax > 0.0) ya /= ymax;
  if (hmax > 0.0) ha /= hmax;
  return 0.5 * (ya + ha);
}

PartitionMap spectral_partition(const Eigen::MatrixXd& affinity, std::size_t k, std::uint64_t seed,
                                SpectralDiagnostics* diagnostics) {
  const auto n = affinity.rows();
  if (affinity.cols() != n) throw std::invalid_argument("affinity must be square");
  if (k == 0) throw PartitionError("k must be at least 1");
  if (k > static_cast<std::size_t>(n)) throw PartitionError("k exceeds the number of vertices");

  Eigen::VectorXd degree = affinity.rowwise().sum() - affinity.diagonal();
  if ((degree.array() <= 0.0).any()) throw PartitionError("affinity graph has an isolated vertex");
  Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  Eigen::MatrixXd laplacian = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  laplacian.diagonal().setOnes();
  laplacian = 0.5 * (laplacian + laplacian.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
  if (eig.info() != Eigen::Success) throw PartitionError("eigendecomposition failed");
  if (diagnostics) diagnostics->eigenvalues = eig.eigenvalues();

  PartitionMap out;
  out.k = k;
  out.assignment.assign(static_cast<std::size_t>(n), 0);
  if (k == 1) return out;

  Eigen::MatrixXd embed = eig.eigenvectors().leftCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm = embed.row(i).norm();
    if (norm > 0.0) embed.row(i) /= norm;
  }

  constexpr int kRestarts = 10;
  constexpr int kMaxIter = 100;
  std::mt19937_64 rng(seed);
  Clustering best;
  bool have = false;
  for (int r = 0; r < kRestarts; ++r) {
    Clustering c = lloyd(embed, k, rng, kMaxIter);
    if (!c.complete) continue;
    if (!have || c.inertia < best.inertia - 1e-12) {
      best = std::move(c);
      have = true;
    }
  }
  if (!have) throw PartitionError("spectral clustering produced an empty block");

  // Canonical block ids: order of first appearance.
  std::vector<std::size_t> relabel(k, k);
  std::size_t next = 0;
  for (std::size_t v = 0; v < best.label.size(); ++v) {
    std::size_t& r = relabel[best.label[v]];
    if (r == k) r = next++;
    out.assignment[v] = r;
  }
  return out;
}

}  // namespace partopf
