#include "mdflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdflow/errors.hpp"

namespace mdflow {

namespace {

// Compresses (row, col) pairs into CSR structure. `order` returns the
// permutation that sorts the entries; duplicates keep their list order, so
// repeated values accumulate deterministically.
std::vector<Index> sorted_order(
    const std::vector<std::pair<Index, Index>>& entries) {
    std::vector<Index> order(entries.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return entries[a] < entries[b];
    });
    return order;
}

}  // namespace

SparseMatrix SparseMatrix::from_triplets(Index rows, Index cols,
                                         const std::vector<Triplet>& triplets) {
    std::vector<std::pair<Index, Index>> entries;
    entries.reserve(triplets.size());
    for (const Triplet& t : triplets) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
            throw DimensionMismatch("triplet outside matrix bounds");
        entries.emplace_back(t.row, t.col);
    }
    AssemblyPlan plan(rows, cols, entries);
    std::vector<double> values(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i)
        values[i] = triplets[i].value;
    return plan.assemble(values);
}

std::vector<double> SparseMatrix::multiply(const std::vector<double>& x) const {
    if (static_cast<Index>(x.size()) != cols_)
        throw DimensionMismatch("multiply: vector length != cols");
    std::vector<double> y(static_cast<std::size_t>(rows_), 0.0);
    for (Index r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (Index s = offsets_[r]; s < offsets_[r + 1]; ++s)
            acc += values_[s] * x[cols_idx_[s]];
        y[r] = acc;
    }
    return y;
}

double SparseMatrix::inf_norm() const {
    double worst = 0.0;
    for (Index r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (Index s = offsets_[r]; s < offsets_[r + 1]; ++s)
            acc += std::abs(values_[s]);
        worst = std::max(worst, acc);
    }
    return worst;
}

double SparseMatrix::coeff(Index row, Index col) const {
    auto begin = cols_idx_.begin() + offsets_[row];
    auto end = cols_idx_.begin() + offsets_[row + 1];
    auto it = std::lower_bound(begin, end, col);
    if (it == end || *it != col) return 0.0;
    return values_[static_cast<size_t>(it - cols_idx_.begin())];
}

AssemblyPlan::AssemblyPlan(
    Index rows, Index cols,
    const std::vector<std::pair<Index, Index>>& entries)
    : rows_(rows), cols_(cols) {
    for (const auto& [r, c] : entries)
        if (r < 0 || r >= rows || c < 0 || c >= cols)
            throw DimensionMismatch("assembly entry outside matrix bounds");
    std::vector<Index> order = sorted_order(entries);
    slots_.resize(entries.size());
    offsets_.assign(static_cast<std::size_t>(rows) + 1, 0);
    Index slot = -1;
    std::pair<Index, Index> prev{-1, -1};
    for (Index i : order) {
        if (entries[i] != prev) {
            ++slot;
            prev = entries[i];
            cols_idx_.push_back(entries[i].second);
            ++offsets_[entries[i].first + 1];
        }
        slots_[i] = slot;
    }
    for (Index r = 0; r < rows; ++r) offsets_[r + 1] += offsets_[r];
}

SparseMatrix AssemblyPlan::assemble(const std::vector<double>& values) const {
    SparseMatrix m;
    assemble_into(values, m);
    return m;
}

void AssemblyPlan::assemble_into(const std::vector<double>& values,
                                 SparseMatrix& out) const {
    if (values.size() != slots_.size())
        throw DimensionMismatch("assembly value count != entry count");
    out.rows_ = rows_;
    out.cols_ = cols_;
    out.offsets_ = offsets_;
    out.cols_idx_ = cols_idx_;
    out.values_.assign(cols_idx_.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i)
        out.values_[slots_[i]] += values[i];
}

struct LuSolver::Impl {
    Eigen::SparseMatrix<double> mat;  // column-major copy for factorization
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    double norm_a = 0.0;
    Index n = 0;
};

LuSolver::LuSolver(const SparseMatrix& a) : impl_(std::make_unique<Impl>()) {
    if (a.rows() != a.cols())
        throw DimensionMismatch("LU needs a square matrix");
    impl_->n = a.rows();
    impl_->norm_a = a.inf_norm();
    using RowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;
    Eigen::Map<const RowMajor> view(
        a.rows(), a.cols(), a.nonzeros(), a.row_offsets().data(),
        a.col_indices().data(), a.values().data());
    impl_->mat = view.cast<double>();
    impl_->lu.analyzePattern(impl_->mat);
    impl_->lu.factorize(impl_->mat);
    if (impl_->lu.info() != Eigen::Success)
        throw SingularMatrix("sparse LU factorization failed (matrix "
                             "singular to working precision)");
}

LuSolver::~LuSolver() = default;
LuSolver::LuSolver(LuSolver&&) noexcept = default;
LuSolver& LuSolver::operator=(LuSolver&&) noexcept = default;

Index LuSolver::dimension() const { return impl_->n; }

std::vector<double> LuSolver::solve(const std::vector<double>& rhs) const {
    if (static_cast<Index>(rhs.size()) != impl_->n)
        throw DimensionMismatch("solve: rhs length != dimension");
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), rhs.size());
    Eigen::VectorXd x = impl_->lu.solve(b);
    auto residual_ok = [&](const Eigen::VectorXd& xx) {
        Eigen::VectorXd r = b - impl_->mat * xx;
        double bound = 1e-10 * (impl_->norm_a * xx.lpNorm<Eigen::Infinity>() +
                                b.lpNorm<Eigen::Infinity>());
        return r.lpNorm<Eigen::Infinity>() <= bound;
    };
    if (!residual_ok(x)) {
        Eigen::VectorXd r = b - impl_->mat * x;
        x += impl_->lu.solve(r);
        if (!residual_ok(x))
            throw SingularMatrix("solve residual exceeds contract after "
                                 "refinement (matrix nearly singular)");
    }
    return {x.data(), x.data() + x.size()};
}

std::vector<double> solve(const SparseMatrix& a,
                          const std::vector<double>& rhs) {
    return LuSolver(a).solve(rhs);
}

BorderedSolver::BorderedSolver(const SparseMatrix& core,
                               std::vector<std::vector<double>> border_cols)
    : lu_(core), core_(core), cols_(std::move(border_cols)) {
    if (cols_.size() > 2)
        throw DimensionMismatch("at most two border columns supported");
    for (const auto& c : cols_) {
        if (static_cast<Index>(c.size()) != lu_.dimension())
            throw DimensionMismatch("border column length != core dimension");
        solved_cols_.push_back(lu_.solve(c));
    }
}

BorderedSolution BorderedSolver::solve(
    const std::vector<std::vector<double>>& border_rows,
    const Eigen::Matrix2d& corner, const std::vector<double>& rhs,
    const std::vector<double>& rhs_tail) const {
    const std::size_t nb = cols_.size();
    if (border_rows.size() != nb || rhs_tail.size() != nb)
        throw DimensionMismatch("border row/tail count != column count");
    const Index n = lu_.dimension();
    for (const auto& r : border_rows)
        if (static_cast<Index>(r.size()) != n)
            throw DimensionMismatch("border row length != core dimension");

    if (nb == 0) {
        BorderedSolution sol;
        sol.x = lu_.solve(rhs);
        return sol;
    }

    auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
        KahanSum s;
        for (Index i = 0; i < n; ++i) s.add(a[i] * b[i]);
        return s.value();
    };
    auto dot_mag = [n](const std::vector<double>& a,
                       const std::vector<double>& b) {
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += std::abs(a[i] * b[i]);
        return s;
    };

    // Schur complement of the corner: S = corner - R A^{-1} B, with scale
    // tracking the summand magnitudes so near-total cancellation (the
    // equilibrium degeneracy) is detected relative to the data.
    Eigen::Matrix2d schur = Eigen::Matrix2d::Zero();
    double scale = 0.0;
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            schur(i, j) = corner(i, j) - dot(border_rows[i], solved_cols_[j]);
            scale = std::max(scale, std::abs(corner(i, j)) +
                                        dot_mag(border_rows[i],
                                                solved_cols_[j]));
        }

    auto eliminate = [&](const std::vector<double>& b,
                         const std::vector<double>& tail,
                         std::vector<double>& x, std::array<double, 2>& m) {
        std::vector<double> y = lu_.solve(b);
        std::array<double, 2> t{0.0, 0.0};
        for (std::size_t i = 0; i < nb; ++i)
            t[i] = tail[i] - dot(border_rows[i], y);
        if (nb == 1) {
            if (std::abs(schur(0, 0)) <= 1e-12 * std::max(scale, 1e-300))
                throw SingularSchurComplement(
                    "multiplier constraint is degenerate (Schur complement "
                    "cancels to below 1e-12 of its terms)");
            m[0] = t[0] / schur(0, 0);
        } else {
            double det = schur(0, 0) * schur(1, 1) - schur(0, 1) * schur(1, 0);
            double det_scale = std::abs(schur(0, 0) * schur(1, 1)) +
                               std::abs(schur(0, 1) * schur(1, 0));
            if (std::abs(det) <= 1e-12 * std::max(det_scale, 1e-300))
                throw SingularSchurComplement(
                    "multiplier constraints are degenerate (2x2 Schur "
                    "determinant cancels; the potential is constant up to "
                    "roundoff)");
            m[0] = (t[0] * schur(1, 1) - t[1] * schur(0, 1)) / det;
            m[1] = (schur(0, 0) * t[1] - schur(1, 0) * t[0]) / det;
        }
        x = y;
        for (std::size_t j = 0; j < nb; ++j)
            for (Index i = 0; i < n; ++i) x[i] -= m[j] * solved_cols_[j][i];
    };

    BorderedSolution sol;
    eliminate(rhs, rhs_tail, sol.x, sol.multipliers);

    // Residual check over the full augmented system, with one refinement
    // pass through the same elimination if the contract is missed.
    auto check = [&](const BorderedSolution& s, std::vector<double>& rc,
                     std::array<double, 2>& rt) {
        rc = core_.multiply(s.x);
        for (Index i = 0; i < n; ++i) {
            double v = rhs[i] - rc[i];
            for (std::size_t j = 0; j < nb; ++j)
                v -= s.multipliers[j] * cols_[j][i];
            rc[i] = v;
        }
        double norm_x = 0.0, norm_b = 0.0, norm_r = 0.0;
        for (Index i = 0; i < n; ++i) {
            norm_x = std::max(norm_x, std::abs(s.x[i]));
            norm_b = std::max(norm_b, std::abs(rhs[i]));
            norm_r = std::max(norm_r, std::abs(rc[i]));
        }
        double norm_a = core_.inf_norm();
        for (std::size_t i = 0; i < nb; ++i) {
            rt[i] = rhs_tail[i] - dot(border_rows[i], s.x);
            for (std::size_t j = 0; j < nb; ++j)
                rt[i] -= corner(i, j) * s.multipliers[j];
            double row_sum = std::abs(corner(i, 0)) + std::abs(corner(i, 1));
            for (Index k = 0; k < n; ++k)
                row_sum += std::abs(border_rows[i][k]);
            norm_a = std::max(norm_a, row_sum);
            norm_x = std::max(norm_x, std::abs(s.multipliers[i]));
            norm_b = std::max(norm_b, std::abs(rhs_tail[i]));
            norm_r = std::max(norm_r, std::abs(rt[i]));
        }
        return norm_r <= 1e-10 * (norm_a * norm_x + norm_b);
    };

    std::vector<double> rc;
    std::array<double, 2> rt{0.0, 0.0};
    if (!check(sol, rc, rt)) {
        BorderedSolution fix;
        eliminate(rc, {rt.begin(), rt.begin() + nb}, fix.x, fix.multipliers);
        for (Index i = 0; i < n; ++i) sol.x[i] += fix.x[i];
        for (std::size_t j = 0; j < nb; ++j)
            sol.multipliers[j] += fix.multipliers[j];
        if (!check(sol, rc, rt))
            throw SingularMatrix("bordered solve residual exceeds contract "
                                 "after refinement");
    }
    return sol;
}

BorderedSolution solve_bordered(const BorderedSystem& system) {
    BorderedSolver solver(system.core, system.border_cols);
    return solver.solve(system.border_rows, system.corner, system.rhs,
                        system.rhs_tail);
}

}  // namespace mdflow
