#ifndef MASKED_CONSENSUS_GRAPH_HPP
#define MASKED_CONSENSUS_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mc {

// Dense row-major square matrix. The graphs handled here are small (tens of
// agents), so no sparse storage.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Undirected weighted edge with 1-indexed endpoints, as written in configs.
struct Edge {
  int i = 0;
  int j = 0;
  double weight = 1.0;
};

// Undirected, weighted communication graph. Agents are 0-indexed inside the
// library; the 1-indexed view only exists at `build`.
class Topology {
 public:
  static Topology build(std::size_t n, std::span<const Edge> edges) {
    if (n < 1) throw std::invalid_argument("topology: agent count must be >= 1");
    Topology t;
    t.adjacency_ = DenseMatrix(n);
    t.neighbors_.assign(n, {});
    for (const Edge& e : edges) {
      const auto where = " in edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")";
      if (e.i < 1 || e.j < 1 || static_cast<std::size_t>(e.i) > n ||
          static_cast<std::size_t>(e.j) > n) {
        throw std::invalid_argument("topology: agent index out of range" + where);
      }
      if (e.i == e.j) throw std::invalid_argument("topology: self-loop" + where);
      if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
        throw std::invalid_argument("topology: nonpositive weight" + where);
      }
      const auto a = static_cast<std::size_t>(e.i - 1);
      const auto b = static_cast<std::size_t>(e.j - 1);
      const double existing = t.adjacency_(a, b);
      if (existing != 0.0) {
        if (existing != e.weight) {
          throw std::invalid_argument("topology: conflicting duplicate" + where);
        }
        continue;
      }
      t.adjacency_(a, b) = e.weight;
      t.adjacency_(b, a) = e.weight;
      t.neighbors_[a].push_back(b);
      t.neighbors_[b].push_back(a);
      ++t.edge_count_;
    }
    for (auto& nb : t.neighbors_) std::sort(nb.begin(), nb.end());
    return t;
  }

  // Cycle 1-2-...-n-1 with a common weight. n = 2 degenerates to one edge.
  static Topology ring(std::size_t n, double weight = 1.0) {
    std::vector<Edge> edges;
    if (n >= 2) {
      for (std::size_t k = 0; k < n; ++k) {
        edges.push_back({static_cast<int>(k + 1), static_cast<int>((k + 1) % n + 1), weight});
      }
    }
    return build(n, edges);
  }

  std::size_t size() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  double weight(std::size_t i, std::size_t j) const { return adjacency_(i, j); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  const DenseMatrix& adjacency() const { return adjacency_; }

  // Weighted degree l_ii.
  double degree(std::size_t i) const {
    double d = 0.0;
    for (std::size_t j : neighbors_[i]) d += adjacency_(i, j);
    return d;
  }

  // out = L x, using the neighbor lists.
  void apply_laplacian(std::span<const double> x, std::span<double> out) const {
    for (std::size_t i = 0; i < size(); ++i) {
      double acc = 0.0;
      for (std::size_t j : neighbors_[i]) acc += adjacency_(i, j) * (x[i] - x[j]);
      out[i] = acc;
    }
  }

 private:
  Topology() = default;

  DenseMatrix adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::size_t edge_count_ = 0;
};

inline DenseMatrix laplacian(const Topology& t) {
  const std::size_t n = t.size();
  DenseMatrix lap(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : t.neighbors(i)) lap(i, j) = -t.weight(i, j);
    lap(i, i) = t.degree(i);
  }
  return lap;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
// Sweeps stop once the off-diagonal Frobenius norm drops below
// `tol * ||A||_F`.
inline std::vector<double> symmetric_eigenvalues(DenseMatrix a, double tol = 1e-12) {
  const std::size_t n = a.size();
  const double scale = std::max(a.frobenius_norm(), 1e-300);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off_norm() > tol * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle that annihilates a(p, q) (Golub & Van Loan 8.5.2).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline std::vector<double> laplacian_spectrum(const Topology& t) {
  auto eig = symmetric_eigenvalues(laplacian(t));
  for (double& v : eig) v = std::max(v, 0.0);  // PSD; clip rounding below zero
  return eig;
}

// Second-smallest Laplacian eigenvalue. Zero for disconnected graphs and for
// the single-agent graph, which has no second eigenvalue.
inline double fiedler_value(const Topology& t) {
  if (t.size() < 2) return 0.0;
  return laplacian_spectrum(t)[1];
}

inline double largest_laplacian_eigenvalue(const Topology& t) {
  return laplacian_spectrum(t).back();
}

// Breadth-first reachability from agent 0.
inline bool is_connected(const Topology& t) {
  const std::size_t n = t.size();
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  seen[0] = true;
  frontier.push(0);
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    for (std::size_t j : t.neighbors(i)) {
      if (!seen[j]) {
        seen[j] = true;
        ++reached;
        frontier.push(j);
      }
    }
  }
  return reached == n;
}

}  // namespace mc

#endif
