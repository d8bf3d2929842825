#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace poolforge {

inline constexpr double kDefaultKernelEps = 1e-12;
// Dense Gram matrices are O(n^2) memory; refuse beyond this many ids.
inline constexpr std::size_t kMaxGramIds = 20000;

enum class KernelKind { cosine, tanimoto };

// Structure-level embeddings, one row per id.
struct FeatureMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd data; // n x d, row i = phi(x_i)
    bool normalized = false;

    std::size_t size() const { return ids.size(); }
    std::ptrdiff_t index_of(const std::string& id) const; // -1 if absent
    void validate() const;
};

// Binary fingerprints as sorted bit-index sets.
struct FingerprintSet {
    std::vector<std::string> ids;
    std::vector<std::vector<std::uint32_t>> bits; // strictly increasing, < n_bits
    std::uint32_t n_bits = 0;

    std::size_t size() const { return ids.size(); }
    void validate() const;
};

// Gram and cross-kernel matrices the selectors operate on. Immutable once
// built; safe to share across threads.
struct KernelView {
    std::vector<std::string> ids;
    Eigen::MatrixXd gram;         // n x n, symmetric
    Eigen::VectorXd diag;         // diag(i) = gram(i, i)
    KernelKind kind = KernelKind::cosine;

    std::size_t size() const { return ids.size(); }
};

double cosine_kernel(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b,
                     double eps = kDefaultKernelEps);

// |a and b| / |a or b| over sorted bit sets. Empty vs empty is 1 so that
// k = 1 iff the sets are equal.
double tanimoto_kernel(const std::vector<std::uint32_t>& a,
                       const std::vector<std::uint32_t>& b);

// OpenMP-parallel over rows; the lower triangle is computed and mirrored so
// gram(i,j) == gram(j,i) exactly.
KernelView gram_matrix(const FeatureMatrix& features, double eps = kDefaultKernelEps);
KernelView gram_matrix(const FingerprintSet& fingerprints);

// k(i,i) + k(j,j) - 2 k(i,j), clamped to >= 0.
double kernel_distance_sq(const KernelView& view, std::size_t i, std::size_t j);

// Entry (i, j) = scalar kernel of pool row i vs conditioning row j.
Eigen::MatrixXd cross_kernel(const FeatureMatrix& pool,
                             const FeatureMatrix& conditioning,
                             double eps = kDefaultKernelEps);
Eigen::MatrixXd cross_kernel(const FingerprintSet& pool,
                             const FingerprintSet& conditioning);

namespace detail {
// Serial references kept for testing and the kernel benchmark.
KernelView gram_matrix_serial(const FeatureMatrix& features, double eps = kDefaultKernelEps);
KernelView gram_matrix_serial(const FingerprintSet& fingerprints);
} // namespace detail

} // namespace poolforge
