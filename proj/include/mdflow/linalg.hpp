// Sparse linear algebra for the saddle-point systems: CSR storage assembled
// from coordinate triplets, a direct LU solve with a residual guarantee, and
// bordered solves for systems augmented with one or two multiplier unknowns.
#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <array>
#include <memory>
#include <vector>

#include "mdflow/core.hpp"

namespace mdflow {

struct Triplet {
    Index row = 0;
    Index col = 0;
    double value = 0.0;
};

// Compressed-row matrix with sorted unique column indices per row.
class SparseMatrix {
public:
    SparseMatrix() = default;

    // Sums duplicate (row, col) entries in their list order, so a fixed
    // triplet order gives a bit-deterministic matrix.
    static SparseMatrix from_triplets(Index rows, Index cols,
                                      const std::vector<Triplet>& triplets);

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index nonzeros() const { return static_cast<Index>(values_.size()); }

    const std::vector<Index>& row_offsets() const { return offsets_; }
    const std::vector<Index>& col_indices() const { return cols_idx_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    std::vector<double> multiply(const std::vector<double>& x) const;
    double inf_norm() const;

    // Value at (row, col), zero when the entry is not stored.
    double coeff(Index row, Index col) const;

private:
    friend class AssemblyPlan;
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<Index> offsets_;
    std::vector<Index> cols_idx_;
    std::vector<double> values_;
};

// Caches the triplet-to-CSR compression for a fixed sparsity structure so
// repeated assemblies skip the sort. The value array passed to assemble()
// must parallel the entry list given at construction; duplicates still sum,
// in the same order as a fresh compression would.
class AssemblyPlan {
public:
    AssemblyPlan(Index rows, Index cols,
                 const std::vector<std::pair<Index, Index>>& entries);

    SparseMatrix assemble(const std::vector<double>& values) const;

    // Writes into an existing matrix with the right structure, avoiding
    // reallocation inside time-stepping loops.
    void assemble_into(const std::vector<double>& values,
                       SparseMatrix& out) const;

    Index entry_count() const { return static_cast<Index>(slots_.size()); }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<Index> offsets_;
    std::vector<Index> cols_idx_;
    std::vector<Index> slots_;  // entry i accumulates into values[slots_[i]]
};

// Sparse LU factorization (partial pivoting) of a square matrix. Solves
// enforce the residual contract |Ax-b|_inf <= 1e-10 (|A|_inf |x|_inf +
// |b|_inf), applying one step of iterative refinement if needed.
class LuSolver {
public:
    explicit LuSolver(const SparseMatrix& a);
    ~LuSolver();
    LuSolver(LuSolver&&) noexcept;
    LuSolver& operator=(LuSolver&&) noexcept;

    std::vector<double> solve(const std::vector<double>& rhs) const;
    Index dimension() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::vector<double> solve(const SparseMatrix& a,
                          const std::vector<double>& rhs);

struct BorderedSystem {
    SparseMatrix core;
    std::vector<std::vector<double>> border_cols;  // up to 2, length n each
    std::vector<std::vector<double>> border_rows;  // same count as cols
    Eigen::Matrix2d corner = Eigen::Matrix2d::Zero();
    std::vector<double> rhs;
    std::vector<double> rhs_tail;  // one value per border
};

struct BorderedSolution {
    std::vector<double> x;
    std::array<double, 2> multipliers{0.0, 0.0};
};

// Block elimination that factors the core once and reuses it for every
// border column; the multiplier values come from a dense Schur system of
// size <= 2. Reusable across solves with changing border rows and rhs.
class BorderedSolver {
public:
    BorderedSolver(const SparseMatrix& core,
                   std::vector<std::vector<double>> border_cols);

    BorderedSolution solve(const std::vector<std::vector<double>>& border_rows,
                           const Eigen::Matrix2d& corner,
                           const std::vector<double>& rhs,
                           const std::vector<double>& rhs_tail) const;

private:
    LuSolver lu_;
    SparseMatrix core_;  // kept for residual verification
    std::vector<std::vector<double>> cols_;
    std::vector<std::vector<double>> solved_cols_;
};

BorderedSolution solve_bordered(const BorderedSystem& system);

}  // namespace mdflow
