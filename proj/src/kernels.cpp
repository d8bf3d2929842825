#include "poolforge/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "poolforge/error.hpp"

namespace poolforge {

std::ptrdiff_t FeatureMatrix::index_of(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    return it == ids.end() ? -1 : (it - ids.begin());
}

void FeatureMatrix::validate() const {
    if (static_cast<std::size_t>(data.rows()) != ids.size())
        throw Error(errc::dimension_mismatch, "feature rows != id count");
    if (data.cols() < 1)
        throw Error(errc::dimension_mismatch, "feature dimension must be >= 1");
    if (!data.allFinite())
        throw Error(errc::invalid_spec, "feature matrix has non-finite entries");
}

void FingerprintSet::validate() const {
    if (bits.size() != ids.size())
        throw Error(errc::dimension_mismatch, "fingerprint rows != id count");
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const auto& b = bits[i];
        for (std::size_t k = 0; k < b.size(); ++k) {
            if (b[k] >= n_bits)
                throw Error(errc::invalid_spec, "bit index out of range for '" + ids[i] + "'");
            if (k > 0 && b[k] <= b[k - 1])
                throw Error(errc::invalid_spec, "bits not strictly increasing for '" + ids[i] + "'");
        }
    }
}

double cosine_kernel(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b,
                     double eps) {
    if (a.size() != b.size())
        throw Error(errc::dimension_mismatch, "cosine_kernel: dimension mismatch");
    if (!(eps > 0))
        throw Error(errc::invalid_spec, "cosine_kernel: eps must be > 0");
    const double na = std::max(a.norm(), eps);
    const double nb = std::max(b.norm(), eps);
    return a.dot(b) / (na * nb);
}

double tanimoto_kernel(const std::vector<std::uint32_t>& a,
                       const std::vector<std::uint32_t>& b) {
    if (a.empty() && b.empty()) return 1.0; // identical-empty convention
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) { ++inter; ++i; ++j; }
        else if (a[i] < b[j]) ++i;
        else ++j;
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void check_gram_size(std::size_t n) {
    if (n < 1) throw Error(errc::empty_input, "gram_matrix: no ids");
    if (n > kMaxGramIds)
        throw Error(errc::pool_too_large,
                    "gram_matrix: " + std::to_string(n) + " ids exceeds dense cap of " +
                        std::to_string(kMaxGramIds));
}

// Rows scaled by 1/max(||row||, eps); dot products of these rows are the
// cosine kernel entries.
Eigen::MatrixXd normalized_rows(const FeatureMatrix& f, double eps) {
    Eigen::MatrixXd out = f.data;
    if (f.normalized) return out;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = std::max(out.row(i).norm(), eps);
        out.row(i) /= n;
    }
    return out;
}

template <typename EntryFn>
KernelView build_gram(std::vector<std::string> ids, KernelKind kind, EntryFn entry,
                      bool parallel) {
    const auto n = static_cast<Eigen::Index>(ids.size());
    KernelView view;
    view.ids = std::move(ids);
    view.kind = kind;
    view.gram.resize(n, n);

    // Lower triangle once, then mirror: symmetry is exact by construction and
    // the result does not depend on the thread count.
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            view.gram(i, j) = entry(i, j);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            view.gram(i, j) = view.gram(j, i);

    view.diag = view.gram.diagonal();
    return view;
}

KernelView gram_cosine(const FeatureMatrix& features, double eps, bool parallel) {
    features.validate();
    check_gram_size(features.size());
    const Eigen::MatrixXd rows = normalized_rows(features, eps);
    return build_gram(
        features.ids, KernelKind::cosine,
        [&](Eigen::Index i, Eigen::Index j) { return rows.row(i).dot(rows.row(j)); },
        parallel);
}

KernelView gram_tanimoto(const FingerprintSet& fp, bool parallel) {
    fp.validate();
    check_gram_size(fp.size());
    return build_gram(
        fp.ids, KernelKind::tanimoto,
        [&](Eigen::Index i, Eigen::Index j) { return tanimoto_kernel(fp.bits[i], fp.bits[j]); },
        parallel);
}

} // namespace

KernelView gram_matrix(const FeatureMatrix& features, double eps) {
    return gram_cosine(features, eps, true);
}

KernelView gram_matrix(const FingerprintSet& fingerprints) {
    return gram_tanimoto(fingerprints, true);
}

namespace detail {
KernelView gram_matrix_serial(const FeatureMatrix& features, double eps) {
    return gram_cosine(features, eps, false);
}
KernelView gram_matrix_serial(const FingerprintSet& fingerprints) {
    return gram_tanimoto(fingerprints, false);
}
} // namespace detail

double kernel_distance_sq(const KernelView& view, std::size_t i, std::size_t j) {
    if (i >= view.size() || j >= view.size())
        throw Error(errc::index_out_of_range, "kernel_distance_sq: index out of range");
    const double d2 = view.diag(static_cast<Eigen::Index>(i)) +
                      view.diag(static_cast<Eigen::Index>(j)) -
                      2.0 * view.gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return std::max(d2, 0.0);
}

Eigen::MatrixXd cross_kernel(const FeatureMatrix& pool,
                             const FeatureMatrix& conditioning,
                             double eps) {
    pool.validate();
    if (conditioning.size() > 0) {
        conditioning.validate();
        if (pool.data.cols() != conditioning.data.cols())
            throw Error(errc::dimension_mismatch, "cross_kernel: feature dimension mismatch");
    }
    const Eigen::MatrixXd a = normalized_rows(pool, eps);
    const auto n = a.rows();
    const auto m = static_cast<Eigen::Index>(conditioning.size());
    Eigen::MatrixXd out(n, m);
    if (m == 0) return out;
    const Eigen::MatrixXd b = normalized_rows(conditioning, eps);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            out(i, j) = a.row(i).dot(b.row(j));
    return out;
}

Eigen::MatrixXd cross_kernel(const FingerprintSet& pool,
                             const FingerprintSet& conditioning) {
    pool.validate();
    conditioning.validate();
    if (conditioning.size() > 0 && pool.n_bits != conditioning.n_bits)
        throw Error(errc::kind_mismatch, "cross_kernel: n_bits mismatch");
    const auto n = static_cast<Eigen::Index>(pool.size());
    const auto m = static_cast<Eigen::Index>(conditioning.size());
    Eigen::MatrixXd out(n, m);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            out(i, j) = tanimoto_kernel(pool.bits[i], conditioning.bits[j]);
    return out;
}

} // namespace poolforge
