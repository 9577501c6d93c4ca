#pragma once

// Laplace-approximated marginal log-likelihood of the CLMM with crossed
// annotator and document random effects, and its exact gradient.
//
// Random effects are spherical: u_g = L_g b_g with b_g ~ N(0, I). For
// conditional log-likelihood l(b) the approximation is
//
//   log L = l(b*) - |b*|^2 / 2 - log det H / 2,   H = I + sum_i w_i v_i v_i'
//
// at the joint mode b*, with w_i = -d^2 log p_i / d eta^2 and v_i the
// loadings of observation i on b. H is sparse: one q x q block per
// annotator, per document, and per observed (annotator, document) pair.
//
// The gradient differentiates through b*(theta) and w_i(b*) implicitly,
// which needs the blocks of H^-1 on the sparsity pattern of H. Those come
// from a selected inversion of the sparse LDL' factor.

#include "evalpower/clmm/link.hpp"
#include "evalpower/data_model.hpp"
#include "evalpower/error.hpp"

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace evalpower::clmm {

// Dataset re-indexed against a parameter layout.
struct CompiledData {
    struct Obs {
        int y = 0;          // 0-based category
        int beta = -1;      // fixed-effect index, -1 for the reference system
        int annot = 0;
        int doc = 0;
        int pair = 0;       // index into `pairs`
    };
    int levels = 0;
    int n_systems = 0;
    int n_annot = 0;
    int n_doc = 0;
    std::vector<Obs> obs;
    std::vector<std::pair<int, int>> pairs;  // distinct (annotator, document)
};

inline CompiledData compile(const Dataset& ds, const std::vector<std::string>& systems, const std::string& reference,
                            int levels) {
    if (ds.kind() != JudgementKind::score)
        throw Error(Errc::DimensionMismatch, "the ordinal model applies to score data only");
    if (ds.n_levels() != levels)
        throw Error(Errc::DimensionMismatch, "dataset has " + std::to_string(ds.n_levels()) + " levels, model has " +
                                                 std::to_string(levels));
    const auto ref_it = std::find(systems.begin(), systems.end(), reference);
    if (ref_it == systems.end()) throw Error(Errc::DimensionMismatch, "reference '" + reference + "' not in systems");
    const int ref = static_cast<int>(ref_it - systems.begin());
    std::vector<int> beta_of_ds_system(ds.systems().size());
    for (std::size_t s = 0; s < ds.systems().size(); ++s) {
        auto it = std::find(systems.begin(), systems.end(), ds.systems()[s]);
        if (it == systems.end())
            throw Error(Errc::DimensionMismatch, "dataset system '" + ds.systems()[s] + "' not in model");
        const int pos = static_cast<int>(it - systems.begin());
        beta_of_ds_system[s] = pos == ref ? -1 : (pos < ref ? pos : pos - 1);
    }
    CompiledData d;
    d.levels = levels;
    d.n_systems = static_cast<int>(systems.size());
    d.n_annot = static_cast<int>(ds.annotators().size());
    d.n_doc = static_cast<int>(ds.documents().size());
    std::map<std::pair<int, int>, int> pair_index;
    d.obs.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CompiledData::Obs o;
        o.y = ds.records()[i].value - 1;
        o.beta = beta_of_ds_system[ds.system_index(i)];
        o.annot = static_cast<int>(ds.annotator_index(i));
        o.doc = static_cast<int>(ds.document_index(i));
        auto [it, inserted] = pair_index.emplace(std::make_pair(o.annot, o.doc), static_cast<int>(d.pairs.size()));
        if (inserted) d.pairs.emplace_back(o.annot, o.doc);
        o.pair = it->second;
        d.obs.push_back(o);
    }
    return d;
}

// Inverse entries of a sparse SPD matrix on the pattern of its LDL' factor
// (Takahashi recurrences).
class SelectedInverse {
public:
    template <typename Ldlt>
    void compute(const Ldlt& ldlt) {
        const auto& L = ldlt.matrixL().nestedExpression();
        const auto& D = ldlt.vectorD();
        n_ = static_cast<int>(L.cols());
        colptr_.assign(L.outerIndexPtr(), L.outerIndexPtr() + n_ + 1);
        rows_.assign(L.innerIndexPtr(), L.innerIndexPtr() + colptr_[n_]);
        const double* lval = L.valuePtr();
        z_.assign(rows_.size(), 0.0);
        zdiag_.assign(n_, 0.0);
        perm_.assign(ldlt.permutationP().indices().data(), ldlt.permutationP().indices().data() + n_);
        std::vector<double> acc;
        for (int j = n_ - 1; j >= 0; --j) {
            const int begin = colptr_[j], end = colptr_[j + 1];
            acc.assign(static_cast<std::size_t>(end - begin), 0.0);
            // Z(i, k) for i > k, both in the column pattern, lies in column k
            // (chordal fill), so walk column k alongside the pattern.
            for (int kk = begin; kk < end; ++kk) {
                const int k = rows_[kk];
                acc[kk - begin] += zdiag_[k] * lval[kk];
                int p = colptr_[k];
                for (int mm = kk + 1; mm < end; ++mm) {
                    const int i = rows_[mm];
                    while (rows_[p] < i) ++p;
                    const double zik = z_[p];
                    acc[mm - begin] += zik * lval[kk];
                    acc[kk - begin] += zik * lval[mm];
                }
            }
            for (int ii = begin; ii < end; ++ii) z_[ii] = -acc[ii - begin];
            double diag = 1.0 / D(j);
            for (int kk = begin; kk < end; ++kk) diag -= lval[kk] * z_[kk];
            zdiag_[j] = diag;
        }
    }

    // (H^-1)(r, c) in original ordering; (r, c) must lie on the pattern.
    double operator()(int r, int c) const { return permuted(perm_[r], perm_[c]); }

private:
    double permuted(int i, int k) const {
        if (i == k) return zdiag_[i];
        if (i < k) std::swap(i, k);
        const auto first = rows_.begin() + colptr_[k], last = rows_.begin() + colptr_[k + 1];
        const auto it = std::lower_bound(first, last, i);
        if (it == last || *it != i) return 0.0;  // off-pattern entries are never requested
        return z_[static_cast<std::size_t>(it - rows_.begin())];
    }

    int n_ = 0;
    std::vector<int> colptr_, rows_, perm_;
    std::vector<double> z_, zdiag_;
};

class LaplaceEngine {
public:
    struct Evaluation {
        double loglik = 0.0;
        Eigen::VectorXd grad_mu;
        Eigen::VectorXd grad_beta;
        Eigen::MatrixXd grad_annot;  // d loglik / d L_annot(p, q)
        Eigen::MatrixXd grad_doc;
        int newton_iterations = 0;
    };

    // q = number of random-effect coordinates per level: n_systems for
    // intercept + slopes, 1 for intercepts only.
    LaplaceEngine(const CompiledData& data, int q, bool with_doc)
        : data_(data), q_(q), with_doc_(with_doc) {
        if (q != 1 && q != data.n_systems) throw Error(Errc::DimensionMismatch, "q must be 1 or the number of systems");
        n_b_ = (data.n_annot + (with_doc ? data.n_doc : 0)) * q;
        build_pattern();
        b_ = Eigen::VectorXd::Zero(n_b_);
    }

    int dimension() const { return n_b_; }
    const Eigen::VectorXd& mode() const { return b_; }
    void reset_mode() { b_.setZero(); }

    Evaluation evaluate(const Eigen::VectorXd& mu, const Eigen::VectorXd& beta, const Eigen::MatrixXd& L_annot,
                        const Eigen::MatrixXd& L_doc, bool with_gradient) {
        if (mu.size() != data_.levels - 1 || beta.size() != data_.n_systems - 1 || L_annot.rows() != q_ ||
            L_annot.cols() != q_ || (with_doc_ && (L_doc.rows() != q_ || L_doc.cols() != q_)))
            throw Error(Errc::DimensionMismatch, "parameter dimensions do not match the compiled data");
        for (int c = 1; c < mu.size(); ++c)
            if (!(mu(c) > mu(c - 1))) throw Error(Errc::NonFiniteLikelihood, "thresholds are not increasing");
        const std::size_t N = data_.obs.size();
        compute_loadings(L_annot, L_doc);

        Evaluation ev;
        // Inner Newton iterations for the mode of the penalized likelihood.
        eta_.resize(N);
        w_.resize(N);
        Eigen::VectorXd grad(n_b_), step(n_b_), trial(n_b_);
        double f = penalized(mu, beta, b_);
        constexpr int kMaxNewton = 200;
        bool polished = false;
        for (int it = 0;; ++it) {
            ev.newton_iterations = it;
            grad = -b_;
            for (std::size_t i = 0; i < N; ++i) {
                const auto& o = data_.obs[i];
                const auto t = link_terms(o.y, eta_[i], mu, false);
                w_[i] = std::max(0.0, -t.d2);
                add_block(grad, annot_offset(o.annot), t.d1, va(i));
                if (with_doc_) add_block(grad, doc_offset(o.doc), t.d1, vd(i));
            }
            factorize();
            step = ldlt_.solve(grad);
            const double decrement = grad.dot(step);
            if (polished || it >= kMaxNewton || !(decrement > 0.0)) break;
            if (decrement < 1e-20) {
                // One last full step puts the mode at round-off accuracy; the
                // next pass refactorizes there.
                b_ += step;
                f = penalized(mu, beta, b_);
                polished = true;
                continue;
            }
            double t = 1.0;
            bool accepted = false;
            for (int half = 0; half < 60; ++half, t *= 0.5) {
                trial = b_ + t * step;
                const double f_trial = penalized(mu, beta, trial);
                if (f_trial >= f - 1e-12 * std::fabs(f)) {
                    b_ = trial;
                    f = f_trial;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                f = penalized(mu, beta, b_);
                break;
            }
        }

        // eta_, w_ and the factor now describe the mode.
        double logdet = 0.0;
        for (int k = 0; k < n_b_; ++k) logdet += std::log(ldlt_.vectorD()(k));
        ev.loglik = f - 0.5 * logdet;
        if (!std::isfinite(ev.loglik)) throw Error(Errc::NonFiniteLikelihood, "log-likelihood is not finite");
        if (with_gradient) gradient(mu, ev);
        return ev;
    }

private:
    int annot_offset(int a) const { return a * q_; }
    int doc_offset(int d) const { return (data_.n_annot + d) * q_; }
    const double* va(std::size_t i) const { return &va_[i * q_]; }
    const double* vd(std::size_t i) const { return &vd_[i * q_]; }

    static void add_block(Eigen::VectorXd& target, int offset, double scale, const double* v, int q) {
        for (int k = 0; k < q; ++k) target(offset + k) += scale * v[k];
    }
    void add_block(Eigen::VectorXd& target, int offset, double scale, const double* v) const {
        add_block(target, offset, scale, v, q_);
    }
    double dot_block(const Eigen::VectorXd& x, int offset, const double* v) const {
        double s = 0.0;
        for (int k = 0; k < q_; ++k) s += x(offset + k) * v[k];
        return s;
    }

    // Row positions of z_i with a 1: the intercept and, with slopes, the system dummy.
    int z_support(const CompiledData::Obs& o, int out[2]) const {
        out[0] = 0;
        if (q_ > 1 && o.beta >= 0) {
            out[1] = 1 + o.beta;
            return 2;
        }
        return 1;
    }

    // v_i = L' z_i for both factors.
    void compute_loadings(const Eigen::MatrixXd& L_annot, const Eigen::MatrixXd& L_doc) {
        const std::size_t N = data_.obs.size();
        va_.assign(N * q_, 0.0);
        vd_.assign(with_doc_ ? N * q_ : 0, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            int zs[2];
            const int nz = z_support(data_.obs[i], zs);
            for (int k = 0; k < nz; ++k)
                for (int c = 0; c < q_; ++c) {
                    va_[i * q_ + c] += L_annot(zs[k], c);
                    if (with_doc_) vd_[i * q_ + c] += L_doc(zs[k], c);
                }
        }
    }

    // Penalized conditional log-likelihood at b; refreshes eta_.
    double penalized(const Eigen::VectorXd& mu, const Eigen::VectorXd& beta, const Eigen::VectorXd& b) {
        double f = -0.5 * b.squaredNorm();
        for (std::size_t i = 0; i < data_.obs.size(); ++i) {
            const auto& o = data_.obs[i];
            double eta = o.beta >= 0 ? beta(o.beta) : 0.0;
            eta += dot_block(b, annot_offset(o.annot), va(i));
            if (with_doc_) eta += dot_block(b, doc_offset(o.doc), vd(i));
            eta_[i] = eta;
            f += link_terms(o.y, eta, mu, false).logp;
        }
        return f;
    }

    void build_pattern() {
        const int q = q_, A = data_.n_annot, D = with_doc_ ? data_.n_doc : 0;
        const int P = with_doc_ ? static_cast<int>(data_.pairs.size()) : 0;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>((A + D) * q * q + P * q * q));
        for (int g = 0; g < A + D; ++g)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c <= r; ++c) trip.emplace_back(g * q + r, g * q + c, 1.0);
        for (int p = 0; p < P; ++p)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c)
                    trip.emplace_back(doc_offset(data_.pairs[p].second) + r, annot_offset(data_.pairs[p].first) + c, 1.0);
        H_.resize(n_b_, n_b_);
        H_.setFromTriplets(trip.begin(), trip.end());
        H_.makeCompressed();
        auto index_of = [&](int r, int c) {
            const int* rows = H_.innerIndexPtr();
            const int* first = rows + H_.outerIndexPtr()[c];
            const int* last = rows + H_.outerIndexPtr()[c + 1];
            return static_cast<int>(std::lower_bound(first, last, r) - rows);
        };
        diag_index_.assign(static_cast<std::size_t>((A + D) * q * q), -1);
        for (int g = 0; g < A + D; ++g)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c <= r; ++c) diag_index_[(g * q + r) * q + c] = index_of(g * q + r, g * q + c);
        cross_index_.assign(static_cast<std::size_t>(P * q * q), -1);
        for (int p = 0; p < P; ++p)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c)
                    cross_index_[(p * q + r) * q + c] =
                        index_of(doc_offset(data_.pairs[p].second) + r, annot_offset(data_.pairs[p].first) + c);
        ldlt_.analyzePattern(H_);
        diag_blocks_.assign(diag_index_.size(), 0.0);
        cross_blocks_.assign(cross_index_.size(), 0.0);
    }

    // H = I + sum_i w_i v_i v_i' assembled from w_ and factorized.
    void factorize() {
        const int q = q_;
        std::fill(diag_blocks_.begin(), diag_blocks_.end(), 0.0);
        std::fill(cross_blocks_.begin(), cross_blocks_.end(), 0.0);
        for (std::size_t i = 0; i < data_.obs.size(); ++i) {
            const auto& o = data_.obs[i];
            const double w = w_[i];
            if (w == 0.0) continue;
            const double* a = va(i);
            double* ba = &diag_blocks_[static_cast<std::size_t>(o.annot) * q * q];
            for (int r = 0; r < q; ++r)
                for (int c = 0; c <= r; ++c) ba[r * q + c] += w * a[r] * a[c];
            if (!with_doc_) continue;
            const double* d = vd(i);
            double* bd = &diag_blocks_[static_cast<std::size_t>(data_.n_annot + o.doc) * q * q];
            for (int r = 0; r < q; ++r)
                for (int c = 0; c <= r; ++c) bd[r * q + c] += w * d[r] * d[c];
            double* bx = &cross_blocks_[static_cast<std::size_t>(o.pair) * q * q];
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c) bx[r * q + c] += w * d[r] * a[c];
        }
        double* values = H_.valuePtr();
        const int G = static_cast<int>(diag_blocks_.size() / (q * q));
        for (int g = 0; g < G; ++g)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c <= r; ++c) {
                    const std::size_t k = static_cast<std::size_t>((g * q + r) * q + c);
                    values[diag_index_[k]] = diag_blocks_[k] + (r == c ? 1.0 : 0.0);
                }
        for (std::size_t k = 0; k < cross_blocks_.size(); ++k) values[cross_index_[k]] = cross_blocks_[k];
        ldlt_.factorize(H_);
        if (ldlt_.info() != Eigen::Success)
            throw Error(Errc::NonFiniteLikelihood, "random-effect Hessian factorization failed");
    }

    void gradient(const Eigen::VectorXd& mu, Evaluation& ev) {
        const int q = q_;
        const std::size_t N = data_.obs.size();
        sel_.compute(ldlt_);

        // q x q blocks of H^-1 at the start of each level block / pair.
        auto block_of_inverse = [&](int row0, int col0, double* out) {
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c) out[r * q + c] = sel_(row0 + r, col0 + c);
        };
        const int A = data_.n_annot, D = with_doc_ ? data_.n_doc : 0;
        const int P = with_doc_ ? static_cast<int>(data_.pairs.size()) : 0;
        std::vector<double> inv_diag(static_cast<std::size_t>((A + D) * q * q));
        std::vector<double> inv_cross(static_cast<std::size_t>(P * q * q));
        for (int g = 0; g < A + D; ++g) block_of_inverse(g * q, g * q, &inv_diag[static_cast<std::size_t>(g) * q * q]);
        for (int p = 0; p < P; ++p)
            block_of_inverse(doc_offset(data_.pairs[p].second), annot_offset(data_.pairs[p].first),
                             &inv_cross[static_cast<std::size_t>(p) * q * q]);

        // Per observation: link terms, G = (H^-1 v_i) on its two blocks, h = v_i' H^-1 v_i.
        std::vector<LinkTerms> terms(N);
        std::vector<double> Ga(N * q, 0.0), Gd(with_doc_ ? N * q : 0, 0.0), h(N, 0.0);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n_b_);
        for (std::size_t i = 0; i < N; ++i) {
            const auto& o = data_.obs[i];
            terms[i] = link_terms(o.y, eta_[i], mu, true);
            const double* a = va(i);
            const double* Zaa = &inv_diag[static_cast<std::size_t>(o.annot) * q * q];
            double* ga = &Ga[i * q];
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c) ga[r] += Zaa[r * q + c] * a[c];
            if (with_doc_) {
                const double* d = vd(i);
                const double* Zdd = &inv_diag[static_cast<std::size_t>(A + o.doc) * q * q];
                const double* Zda = &inv_cross[static_cast<std::size_t>(o.pair) * q * q];
                double* gd = &Gd[i * q];
                for (int r = 0; r < q; ++r)
                    for (int c = 0; c < q; ++c) {
                        ga[r] += Zda[c * q + r] * d[c];
                        gd[r] += Zda[r * q + c] * a[c] + Zdd[r * q + c] * d[c];
                    }
                for (int r = 0; r < q; ++r) h[i] += d[r] * gd[r];
            }
            for (int r = 0; r < q; ++r) h[i] += a[r] * ga[r];
            // dw/deta = -d3 scales the derivative of log det H through the mode.
            const double coef = -terms[i].d3 * h[i];
            add_block(s, annot_offset(o.annot), coef, a);
            if (with_doc_) add_block(s, doc_offset(o.doc), coef, vd(i));
        }
        const Eigen::VectorXd t = ldlt_.solve(s);

        ev.grad_mu = Eigen::VectorXd::Zero(data_.levels - 1);
        ev.grad_beta = Eigen::VectorXd::Zero(data_.n_systems - 1);
        ev.grad_annot = Eigen::MatrixXd::Zero(q, q);
        ev.grad_doc = Eigen::MatrixXd::Zero(q, q);
        std::vector<double> row(q);
        for (std::size_t i = 0; i < N; ++i) {
            const auto& o = data_.obs[i];
            const auto& lt = terms[i];
            const double hi = h[i];
            double tv = dot_block(t, annot_offset(o.annot), va(i));
            if (with_doc_) tv += dot_block(t, doc_offset(o.doc), vd(i));

            if (o.y < data_.levels - 1) ev.grad_mu(o.y) += lt.up_l - 0.5 * (-lt.up_d2 * hi + lt.up_d1 * tv);
            if (o.y > 0) ev.grad_mu(o.y - 1) += lt.lo_l - 0.5 * (-lt.lo_d2 * hi + lt.lo_d1 * tv);
            if (o.beta >= 0) ev.grad_beta(o.beta) += lt.d1 - 0.5 * (-lt.d3 * hi + lt.d2 * tv);

            int zs[2];
            const int nz = z_support(o, zs);
            const double w = -lt.d2;
            auto accumulate = [&](Eigen::MatrixXd& target, int offset, const double* G) {
                for (int c = 0; c < q; ++c) {
                    const double bc = b_(offset + c);
                    row[c] = lt.d1 * bc -
                             0.5 * (-lt.d3 * bc * hi + 2.0 * w * G[c] + lt.d2 * bc * tv + lt.d1 * t(offset + c));
                }
                for (int k = 0; k < nz; ++k)
                    for (int c = 0; c < q; ++c) target(zs[k], c) += row[c];
            };
            accumulate(ev.grad_annot, annot_offset(o.annot), &Ga[i * q]);
            if (with_doc_) accumulate(ev.grad_doc, doc_offset(o.doc), &Gd[i * q]);
        }
    }

    const CompiledData& data_;
    int q_;
    bool with_doc_;
    int n_b_ = 0;
    Eigen::VectorXd b_;
    std::vector<double> va_, vd_, eta_, w_;
    Eigen::SparseMatrix<double> H_;
    std::vector<int> diag_index_, cross_index_;
    std::vector<double> diag_blocks_, cross_blocks_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    SelectedInverse sel_;
};

} // namespace evalpower::clmm
