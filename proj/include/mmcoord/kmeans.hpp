#ifndef MMCOORD_KMEANS_HPP
#define MMCOORD_KMEANS_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace mmcoord {

template <typename Scalar>
struct KMeansResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> centroids;  // one row per cluster
  std::vector<int> labels;
  Scalar inertia = Scalar(0);
};

namespace detail {

template <typename Derived, typename Centroids>
typename Derived::Scalar assign_labels(const Eigen::MatrixBase<Derived>& rows, const Centroids& centroids,
                                       std::vector<int>& labels) {
  using Scalar = typename Derived::Scalar;
  Scalar inertia(0);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::Index best = 0;
    const Scalar d = (centroids.rowwise() - rows.row(i)).rowwise().squaredNorm().minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    inertia += d;
  }
  return inertia;
}

}  // namespace detail

/// Lloyd's k-means on the rows of `rows` with k-means++ seeding, keeping the
/// lowest-inertia result over `restarts` seeded runs. `k` is capped at the
/// number of rows, so the result always has min(k, rows) centroids.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& rows, int k, int restarts,
                                              std::uint64_t seed, int max_iterations = 100) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = rows.rows();
  KMeansResult<Scalar> best;
  best.inertia = std::numeric_limits<Scalar>::infinity();
  if (n == 0 || k <= 0) {
    best.inertia = Scalar(0);
    best.centroids.resize(0, rows.cols());
    return best;
  }
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  std::mt19937_64 rng(seed);

  for (int run = 0; run < std::max(restarts, 1); ++run) {
    Mat centroids(k, rows.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centroids.row(0) = rows.row(pick(rng));
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d2(n);
    for (int c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i)
        d2(i) = (centroids.topRows(c).rowwise() - rows.row(i)).rowwise().squaredNorm().minCoeff();
      const Scalar total = d2.sum();
      Eigen::Index chosen = pick(rng);
      if (total > Scalar(0)) {
        std::uniform_real_distribution<Scalar> u(Scalar(0), total);
        Scalar target = u(rng);
        for (chosen = 0; chosen < n - 1; ++chosen) {
          target -= d2(chosen);
          if (target <= Scalar(0)) break;
        }
      }
      centroids.row(c) = rows.row(chosen);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    Scalar inertia = detail::assign_labels(rows, centroids, labels);
    for (int it = 0; it < max_iterations; ++it) {
      Mat sums = Mat::Zero(k, rows.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[i]) += rows.row(i);
        ++counts[labels[i]];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) {
          centroids.row(c) = sums.row(c) / Scalar(counts[c]);
        } else {
          // Re-seed an empty cluster at the point farthest from its centroid.
          Eigen::Index far = 0;
          Scalar far_d(-1);
          for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar d = (rows.row(i) - centroids.row(labels[i])).squaredNorm();
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          centroids.row(c) = rows.row(far);
        }
      }
      std::vector<int> next(labels.size());
      inertia = detail::assign_labels(rows, centroids, next);
      if (next == labels) break;
      labels.swap(next);
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.centroids = centroids;
      best.labels = labels;
    }
  }
  return best;
}

}  // namespace mmcoord

#endif  // MMCOORD_KMEANS_HPP
