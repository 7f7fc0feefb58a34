#pragma once

// Raw selective-scan kernels over per-token recurrence coefficients.
// The recurrence per lane is x_k = a_k * x_{k-1} + b_k. The sequential
// kernel is the reference; the blocked kernel evaluates the same scan
// through the associative operator (a2,b2)∘(a1,b1) = (a2*a1, a2*b1 + b2)
// and must agree within floating-point tolerance.
//
// Layout: a, b, and the state outputs are length L*lanes with token-major
// ordering (k * lanes + lane).

#include <algorithm>
#include <cstdint>
#include <vector>

namespace loco {

template <class Real>
struct ScanOp {
    Real a, b;  // x -> a*x + b
};

template <class Real>
inline ScanOp<Real> compose(const ScanOp<Real>& first, const ScanOp<Real>& second) {
    return {second.a * first.a, second.a * first.b + second.b};
}

template <class Real>
void scan_sequential(const Real* a, const Real* b, const Real* x0, Real* states, int length,
                     int lanes) {
    for (int k = 0; k < length; ++k) {
        const Real* ak = a + int64_t(k) * lanes;
        const Real* bk = b + int64_t(k) * lanes;
        const Real* prev = k == 0 ? x0 : states + int64_t(k - 1) * lanes;
        Real* xk = states + int64_t(k) * lanes;
        for (int l = 0; l < lanes; ++l) xk[l] = ak[l] * prev[l] + bk[l];
    }
}

// Blocked two-pass parallel scan. Pass 1 composes each block's aggregate
// operator, pass 2 folds the aggregates across blocks, pass 3 replays each
// block from its incoming state. Peak workspace: 2 * nblocks * lanes.
template <class Real>
void scan_parallel(const Real* a, const Real* b, const Real* x0, Real* states, int length,
                   int lanes, int block = 32, size_t* peak_workspace_bytes = nullptr) {
    if (length <= block) {
        scan_sequential(a, b, x0, states, length, lanes);
        if (peak_workspace_bytes) *peak_workspace_bytes = 0;
        return;
    }
    const int nblocks = (length + block - 1) / block;
    std::vector<Real> agg_a(size_t(nblocks) * lanes), agg_b(size_t(nblocks) * lanes);
    if (peak_workspace_bytes) *peak_workspace_bytes = 2 * sizeof(Real) * agg_a.size();

#pragma omp parallel for schedule(static)
    for (int j = 0; j < nblocks; ++j) {
        const int k0 = j * block;
        const int k1 = std::min(length, k0 + block);
        Real* aa = agg_a.data() + size_t(j) * lanes;
        Real* ab = agg_b.data() + size_t(j) * lanes;
        for (int l = 0; l < lanes; ++l) {
            aa[l] = Real(1);
            ab[l] = Real(0);
        }
        for (int k = k0; k < k1; ++k) {
            const Real* ak = a + int64_t(k) * lanes;
            const Real* bk = b + int64_t(k) * lanes;
            for (int l = 0; l < lanes; ++l) {
                ab[l] = ak[l] * ab[l] + bk[l];
                aa[l] = ak[l] * aa[l];
            }
        }
    }

    // fold aggregates into per-block incoming states (reuses agg_b as x_in)
    std::vector<Real> carry(x0, x0 + lanes);
    for (int j = 0; j < nblocks; ++j) {
        Real* aa = agg_a.data() + size_t(j) * lanes;
        Real* ab = agg_b.data() + size_t(j) * lanes;
        for (int l = 0; l < lanes; ++l) {
            const Real next = aa[l] * carry[size_t(l)] + ab[l];
            ab[l] = carry[size_t(l)];  // incoming state for block j
            carry[size_t(l)] = next;
        }
    }

#pragma omp parallel for schedule(static)
    for (int j = 0; j < nblocks; ++j) {
        const int k0 = j * block;
        const int k1 = std::min(length, k0 + block);
        const Real* xin = agg_b.data() + size_t(j) * lanes;
        scan_sequential(a + int64_t(k0) * lanes, b + int64_t(k0) * lanes, xin,
                        states + int64_t(k0) * lanes, k1 - k0, lanes);
    }
}

}  // namespace loco
