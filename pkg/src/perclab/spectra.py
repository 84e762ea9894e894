"""Spectral kernels.

Counting is inertia-first: the number of eigenvalues below a shift is read
off the signs of the pivots of a symmetric factorization of A - E*Id, with a
fall back to dense diagonalization whenever a pivot lands within tolerance
of zero (at a spectral point the factorization cannot decide strict vs
inclusive, but the dense spectrum with a clustering snap can).  Exact
integer routines (fraction-free rank, characteristic polynomials) serve jump
multiplicities and the log-Holder machinery, where floating point is not
good enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from numbers import Rational
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InternalCheckError, PreconditionError, ResourceGuardError
from .model import Configuration, HoppingKernel, LatticeRegion, adjacency_kernel
from .operator import DENSE_GUARD, SymmetricOperatorMatrix, assemble
from .percolation import SubgraphCatalog

PIVOT_RTOL = 1e-12        # relative pivot tolerance before aborting to dense
CLUSTER_TOL = 1e-9        # eigenvalue clustering snap for dense counting
VECTOR_RESIDUAL_RTOL = 1e-10
LDL_DENSE_MAX = 600       # above this, factorize sparsely
DENSE_BLOCK_MAX = 2048    # experiment engine: eager full spectra below this
CHARPOLY_GUARD = 64
EXACT_DIM_GUARD = 4096
ASSIGNMENT_GUARD = 10 ** 6
CACHE_SITE_MAX = 64
_CACHE_CAP = 200_000

_EIG_CACHE: dict = {}
_KDIM_CACHE: dict = {}


# ---------------------------------------------------------------------------
# dense spectra


@dataclass
class SpectrumSample:
    """Full spectrum of a finite restriction, ascending with multiplicity."""

    values: np.ndarray
    vectors: Optional[np.ndarray] = None
    residual: Optional[float] = None


def eigs_dense(matrix: SymmetricOperatorMatrix, vectors: bool = False) -> SpectrumSample:
    """Dense full diagonalization, guarded by the dense size limit."""
    a = matrix.to_dense()
    if not vectors:
        return SpectrumSample(np.linalg.eigvalsh(a) if matrix.dim else np.zeros(0))
    if matrix.dim == 0:
        return SpectrumSample(np.zeros(0), np.zeros((0, 0)), 0.0)
    w, v = np.linalg.eigh(a)
    resid = float(np.abs(a @ v - v * w).max())
    limit = VECTOR_RESIDUAL_RTOL * (1.0 + matrix.norm_bound)
    if resid > limit:
        raise InternalCheckError(f"eigenpair residual {resid:.3e} exceeds {limit:.3e}")
    return SpectrumSample(w, v, resid)


def _count_from_eigs(eigs: np.ndarray, energy: float, inclusive: bool) -> int:
    if inclusive:
        return int(np.searchsorted(eigs, energy + CLUSTER_TOL, side="right"))
    return int(np.searchsorted(eigs, energy - CLUSTER_TOL, side="left"))


def _counts_from_eigs(eigs: np.ndarray, energies: np.ndarray, inclusive: bool) -> np.ndarray:
    if inclusive:
        return np.searchsorted(eigs, np.asarray(energies) + CLUSTER_TOL, side="right")
    return np.searchsorted(eigs, np.asarray(energies) - CLUSTER_TOL, side="left")


# ---------------------------------------------------------------------------
# factorization-based counting primitives (None means: pivot within tolerance)


def _sturm_negcount_multi(diag, sub, energies, tol):
    """Pivot signs of the LDL recurrence of a tridiagonal matrix, per energy.

    Returns (negcounts, aborted): lanes flagged aborted hit a pivot within
    tolerance of zero and must be recounted from a dense spectrum.
    """
    e = np.asarray(energies, dtype=np.float64)
    neg = np.zeros(e.shape, dtype=np.int64)
    aborted = np.zeros(e.shape, dtype=bool)
    d = np.full(e.shape, diag[0]) - e
    aborted |= np.abs(d) <= tol
    neg += (d < 0) & ~aborted
    d = np.where(aborted, 1.0, d)
    b2 = np.asarray(sub) ** 2
    for k in range(1, len(diag)):
        d = (diag[k] - e) - b2[k - 1] / d
        aborted |= np.abs(d) <= tol
        neg += (d < 0) & ~aborted
        d = np.where(np.abs(d) <= tol, 1.0, d)
    return neg, aborted


def _ldl_negcount(dense: np.ndarray, tol: float) -> Optional[int]:
    """Negative-pivot count from a dense Bunch-Kaufman factorization."""
    _, d, _ = scipy.linalg.ldl(dense)
    n = d.shape[0]
    neg = 0
    k = 0
    while k < n:
        if k + 1 < n and (d[k + 1, k] != 0.0 or d[k, k + 1] != 0.0):
            a, b, c = d[k, k], d[k + 1, k], d[k + 1, k + 1]
            half_tr = 0.5 * (a + c)
            disc = math.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
            for lam in (half_tr - disc, half_tr + disc):
                if abs(lam) <= tol:
                    return None
                neg += lam < 0
            k += 2
        else:
            if abs(d[k, k]) <= tol:
                return None
            neg += d[k, k] < 0
            k += 1
    return neg


def _splu_negcount(shifted_csc, tol: float) -> Optional[int]:
    """Negative-pivot count from a symmetric-mode sparse LU factorization."""
    try:
        lu = spla.splu(
            shifted_csc,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError:
        return None  # exactly singular
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None  # off-diagonal pivoting broke symmetry
    d = lu.U.diagonal()
    if np.abs(d).min() <= tol:
        return None
    return int((d < 0).sum())


def _tridiagonal_form(sub: SymmetricOperatorMatrix):
    """(diag, subdiagonal) if the block is tridiagonal in row order, else None."""
    n = sub.dim
    if len(sub.off_i) != n - 1 or n < 2:
        return None
    if np.all(sub.off_j - sub.off_i == 1) and np.array_equal(sub.off_i, np.arange(n - 1)):
        return sub.diag, sub.off_v
    return None


def _dense_eigs_for_block(sub: SymmetricOperatorMatrix) -> np.ndarray:
    if sub.dim > DENSE_GUARD:
        raise InternalCheckError(
            f"factorization breakdown on a block of dimension {sub.dim}, "
            f"beyond the dense guard {DENSE_GUARD}"
        )
    tri = _tridiagonal_form(sub)
    if tri is not None:
        return scipy.linalg.eigvalsh_tridiagonal(tri[0], tri[1])
    return np.linalg.eigvalsh(sub.to_dense())


def count_below(matrix: SymmetricOperatorMatrix, energy: float, inclusive: bool = False) -> int:
    """Number of eigenvalues < energy (or <= with the inclusive flag).

    Inertia of A - E*Id per connected block; a pivot within tolerance of zero
    aborts that block to dense diagonalization so multiplicities exactly at
    the shift are resolved by the clustering snap rather than by pivot noise.
    """
    if not np.isfinite(energy):
        raise PreconditionError("energy must be finite")
    energy = float(energy)
    tol = PIVOT_RTOL * max(1.0, matrix.norm_bound + abs(energy))
    total = 0
    for rows in matrix.blocks():
        sub = matrix.submatrix(rows)
        total += _count_block(sub, energy, inclusive, tol)
    return total


def _count_block(sub: SymmetricOperatorMatrix, energy, inclusive, tol) -> int:
    n = sub.dim
    if n == 0:
        return 0
    c: Optional[int]
    tri = _tridiagonal_form(sub)
    if tri is not None:
        neg, aborted = _sturm_negcount_multi(tri[0], tri[1], np.array([energy]), tol)
        c = None if aborted[0] else int(neg[0])
    elif n <= LDL_DENSE_MAX:
        c = _ldl_negcount(sub.to_dense() - energy * np.eye(n), tol)
    else:
        shifted = (sub.to_sparse() - energy * sp.identity(n, format="csr")).tocsc()
        c = _splu_negcount(shifted, tol)
    if c is None:
        c = _count_from_eigs(_dense_eigs_for_block(sub), energy, inclusive)
    return c


# ---------------------------------------------------------------------------
# per-configuration counting engine

# The experiments sweep many energies over the same realization, so the
# engine diagonalizes small blocks once (with a cross-realization cache for
# integer-potential blocks, which repeat massively) and keeps factorization
# counting only for blocks too large to diagonalize eagerly.


class _LargeBlock:
    def __init__(self, sub: SymmetricOperatorMatrix, rows: np.ndarray):
        self.sub = sub
        self.rows = rows
        self._csr = None
        self._eigs = None
        self._tri = _tridiagonal_form(sub)

    def eigs(self) -> np.ndarray:
        if self._eigs is None:
            self._eigs = _dense_eigs_for_block(self.sub)
        return self._eigs

    def counts(self, energies: np.ndarray, inclusive: bool) -> np.ndarray:
        if self._eigs is not None:
            return _counts_from_eigs(self._eigs, energies, inclusive)
        energies = np.asarray(energies, dtype=np.float64)
        tol = PIVOT_RTOL * max(1.0, self.sub.norm_bound + np.abs(energies).max())
        if self._tri is not None:
            neg, aborted = _sturm_negcount_multi(self._tri[0], self._tri[1], energies, tol)
            if aborted.any():
                fixed = _counts_from_eigs(self.eigs(), energies[aborted], inclusive)
                neg[aborted] = fixed
            return neg.astype(np.int64)
        if self._csr is None:
            self._csr = self.sub.to_sparse()
        out = np.zeros(len(energies), dtype=np.int64)
        eye = sp.identity(self.sub.dim, format="csr")
        for k, e in enumerate(energies):
            c = _splu_negcount((self._csr - float(e) * eye).tocsc(), tol)
            if c is None:
                c = _count_from_eigs(self.eigs(), float(e), inclusive)
            out[k] = c
        return out


class BlockSpectra:
    """Counting service for one assembled matrix, organized by cluster block."""

    def __init__(self, matrix: SymmetricOperatorMatrix,
                 dense_block_max: int = DENSE_BLOCK_MAX,
                 eager_spectra: bool = True):
        """eager_spectra=False builds only the block decomposition (for the
        exact-arithmetic paths); counting methods then must not be used."""
        self.matrix = matrix
        self.box_size = matrix.box_size
        blocks = matrix.blocks()
        n = matrix.dim
        self.block_rows = blocks
        self.large = []
        self._keys: dict = {}

        if n == 0:
            self._nblocks = 0
            self.small_eigs = np.zeros(0)
            return
        self._nblocks = len(blocks)

        # regroup rows and edges contiguously by block; per-block data are
        # then plain slices, which is what makes 10^5-block sweeps cheap
        lens = np.fromiter((len(b) for b in blocks), dtype=np.int64, count=len(blocks))
        perm = np.concatenate(blocks)
        bounds = np.cumsum(lens)
        starts = bounds - lens
        loc_of = np.empty(n, dtype=np.int64)
        loc_of[perm] = np.arange(n) - np.repeat(starts, lens)
        block_of = np.empty(n, dtype=np.int64)
        block_of[perm] = np.repeat(np.arange(len(blocks)), lens)
        self._row_starts = starts
        self._row_ends = bounds
        self._diag_g = matrix.diag[perm]
        self._sites_g = matrix.sites[perm]
        if len(matrix.off_i):
            eb = block_of[matrix.off_i]
            eorder = np.argsort(eb, kind="stable")
            self._ei_g = loc_of[matrix.off_i[eorder]]
            self._ej_g = loc_of[matrix.off_j[eorder]]
            self._ev_g = matrix.off_v[eorder]
            ecount = np.bincount(eb, minlength=len(blocks))
            ebounds = np.cumsum(ecount)
            self._edge_starts = ebounds - ecount
            self._edge_ends = ebounds
        else:
            self._ei_g = self._ej_g = np.zeros(0, dtype=np.int64)
            self._ev_g = np.zeros(0)
            self._edge_starts = np.zeros(len(blocks), dtype=np.int64)
            self._edge_ends = self._edge_starts

        if not eager_spectra:
            self.small_eigs = np.zeros(0)
            return
        cacheable = matrix.exact
        parts = []
        pending = {}  # size -> list of block indices to diagonalize in a batch
        lens_list = lens.tolist()
        for b in range(len(blocks)):
            nb = lens_list[b]
            if nb > dense_block_max:
                self.large.append(_LargeBlock(matrix.submatrix(blocks[b]), blocks[b]))
                continue
            if cacheable and nb <= CACHE_SITE_MAX:
                key = self._key(b)
                hit = _EIG_CACHE.get(key)
                if hit is not None:
                    parts.append(hit)
                    continue
            pending.setdefault(nb, []).append(b)
        for size, members in pending.items():
            parts.extend(self._diagonalize_batch(size, members))
        self.small_eigs = np.sort(np.concatenate(parts)) if parts else np.zeros(0)

    def _parts(self, b):
        r0, r1 = self._row_starts[b], self._row_ends[b]
        e0, e1 = self._edge_starts[b], self._edge_ends[b]
        return (self._diag_g[r0:r1], self._sites_g[r0:r1],
                self._ei_g[e0:e1], self._ej_g[e0:e1], self._ev_g[e0:e1])

    def _key(self, b):
        key = self._keys.get(b)
        if key is None:
            diag, sites, ei, ej, ev = self._parts(b)
            rel = sites - sites[0]
            key = (rel.tobytes(), diag.tobytes(), ei.tobytes(), ej.tobytes(), ev.tobytes())
            self._keys[b] = key
        return key

    def _diagonalize_batch(self, size, members):
        m = len(members)
        if size == 1:
            ws = self._diag_g[self._row_starts[members]].reshape(m, 1)
        else:
            dense = np.zeros((m, size, size))
            rng = np.arange(size)
            for x, b in enumerate(members):
                diag, _, ei, ej, ev = self._parts(b)
                dense[x, rng, rng] = diag
                dense[x, ei, ej] = ev
                dense[x, ej, ei] = ev
            ws = np.linalg.eigh(dense)[0]
        out = []
        cacheable = self.matrix.exact
        for x, b in enumerate(members):
            w = ws[x]
            if cacheable and size <= CACHE_SITE_MAX and len(_EIG_CACHE) < _CACHE_CAP:
                _EIG_CACHE[self._key(b)] = w
            out.append(w)
        return out

    # -- counting -----------------------------------------------------------

    def counts_below(self, energies, inclusive: bool = False) -> np.ndarray:
        energies = np.asarray(energies, dtype=np.float64)
        out = _counts_from_eigs(self.small_eigs, energies, inclusive).astype(np.int64)
        for lb in self.large:
            out += lb.counts(energies, inclusive)
        return out

    def count_below(self, energy: float, inclusive: bool = False) -> int:
        return int(self.counts_below(np.array([energy]), inclusive)[0])

    def count_in_closed(self, lo: float, hi: float) -> int:
        """Eigenvalues in the closed interval [lo, hi]."""
        return self.count_below(hi, inclusive=True) - self.count_below(lo, inclusive=False)

    @property
    def total_dim(self) -> int:
        return self.matrix.dim

    # -- exact multiplicities -----------------------------------------------

    def kernel_dim(self, energy) -> int:
        """Exact dim ker(A - E) for rational E on an exact-integer matrix."""
        r, s = _as_rational(energy)
        if not self.matrix.exact:
            raise TypeError("exact kernel dimension requires an exact-integer matrix")
        total = 0
        for b in range(self._nblocks):
            nb = int(self._row_ends[b] - self._row_starts[b])
            key = (self._key(b), r, s) if nb <= CACHE_SITE_MAX else None
            if key is not None:
                hit = _KDIM_CACHE.get(key)
                if hit is not None:
                    total += hit
                    continue
            out = _kernel_dim_from_parts(*self._parts(b), r, s)
            if key is not None and len(_KDIM_CACHE) < _CACHE_CAP:
                _KDIM_CACHE[key] = out
            total += out
        return total

    # -- spectra with vectors (projector estimator) --------------------------

    def dense_blocks_with_vectors(self):
        """Yield (global rows, eigenvalues, eigenvectors) per block."""
        for b, rows in enumerate(self.block_rows):
            diag, sites, ei, ej, ev = self._parts(b)
            n = len(diag)
            if n > DENSE_GUARD:
                raise ResourceGuardError(
                    f"projector estimator needs dense spectra; block of size {n} "
                    f"exceeds guard {DENSE_GUARD}"
                )
            a = np.zeros((n, n))
            a[np.arange(n), np.arange(n)] = diag
            a[ei, ej] = ev
            a[ej, ei] = ev
            w, v = np.linalg.eigh(a)
            yield rows, w, v


# ---------------------------------------------------------------------------
# exact integer linear algebra


def _as_rational(energy):
    if isinstance(energy, Rational):
        f = Fraction(energy)
        return f.numerator, f.denominator
    if isinstance(energy, float) and energy.is_integer():
        return int(energy), 1
    raise PreconditionError(f"exact routines need a rational energy, got {energy!r}")


def bareiss_rank(rows) -> int:
    """Rank of an integer matrix by fraction-free elimination (exact)."""
    m = [list(map(int, r)) for r in rows]
    nr = len(m)
    if nr == 0:
        return 0
    nc = len(m[0])
    prev = 1
    row = 0
    for col in range(nc):
        piv_row = None
        for i in range(row, nr):
            if m[i][col]:
                piv_row = i
                break
        if piv_row is None:
            continue
        if piv_row != row:
            m[row], m[piv_row] = m[piv_row], m[row]
        pv = m[row][col]
        mr = m[row]
        for i in range(row + 1, nr):
            mi = m[i]
            mic = mi[col]
            if mic:
                for j in range(col + 1, nc):
                    mi[j] = (mi[j] * pv - mic * mr[j]) // prev
                mi[col] = 0
            elif pv != prev:
                for j in range(col + 1, nc):
                    mi[j] = (mi[j] * pv) // prev
        prev = pv
        row += 1
        if row == nr:
            break
    return row


def _dense_int_rows(matrix) -> list:
    if isinstance(matrix, SymmetricOperatorMatrix):
        return matrix.to_dense_int()
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError("expected a square matrix")
    if not np.all(a == np.floor(a)):
        raise TypeError("matrix entries are not exact integers")
    return [[int(x) for x in row] for row in a]


def _kernel_dim_from_parts(diag, sites, ei, ej, ev, r, s) -> int:
    n = len(diag)
    if n == 0:
        return 0
    if n > EXACT_DIM_GUARD:
        raise ResourceGuardError(
            f"exact elimination on a block of dimension {n} exceeds guard {EXACT_DIM_GUARD}"
        )
    rows = [[0] * n for _ in range(n)]
    for k in range(n):
        rows[k][k] = s * int(diag[k]) - r
    for i, j, v in zip(ei.tolist(), ej.tolist(), ev.tolist()):
        rows[i][j] = rows[j][i] = s * int(v)
    return n - bareiss_rank(rows)


def kernel_dim_exact(matrix, energy) -> int:
    """dim ker(A - E) over the rationals, exactly, for rational E.

    Computed as dimension minus the rank of s*A - r*Id under fraction-free
    integer elimination, block by block.
    """
    r, s = _as_rational(energy)
    if isinstance(matrix, SymmetricOperatorMatrix):
        if not matrix.exact:
            raise TypeError("kernel_dim_exact requires an exact-integer matrix")
        return BlockSpectra(matrix, eager_spectra=False).kernel_dim(Fraction(r, s))
    rows = _dense_int_rows(matrix)
    n = len(rows)
    if n > EXACT_DIM_GUARD:
        raise ResourceGuardError(f"dimension {n} exceeds exact guard {EXACT_DIM_GUARD}")
    b = [[s * rows[i][j] - (r if i == j else 0) for j in range(n)] for i in range(n)]
    return n - bareiss_rank(b)


_CHARPOLY_CACHE: dict = {}


def charpoly_exact(matrix) -> tuple:
    """Integer coefficients of det(t*Id - A), ascending; leading term 1.

    Faddeev-LeVerrier with exact big-integer arithmetic; every division in
    the recurrence is exact.
    """
    rows = _dense_int_rows(matrix)
    n = len(rows)
    if n > CHARPOLY_GUARD:
        raise ResourceGuardError(f"dimension {n} exceeds charpoly guard {CHARPOLY_GUARD}")
    if n == 0:
        return (1,)
    key = tuple(tuple(r) for r in rows)
    hit = _CHARPOLY_CACHE.get(key)
    if hit is not None:
        return hit
    m = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    desc = []  # coefficients of t^{n-1}, ..., t^0
    for k in range(1, n + 1):
        am = [[sum(rows[i][l] * m[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        tr = sum(am[i][i] for i in range(n))
        if tr % k:
            raise InternalCheckError("non-exact division in the charpoly recurrence")
        ck = -tr // k
        desc.append(ck)
        for i in range(n):
            am[i][i] += ck
        m = am
    out = tuple(reversed(desc)) + (1,)
    if len(_CHARPOLY_CACHE) < _CACHE_CAP:
        _CHARPOLY_CACHE[key] = out
    return out


def _shift_poly(coeffs, shift: int) -> tuple:
    """Coefficients (ascending) of p(t + shift) for integer shift."""
    n = len(coeffs) - 1
    out = [0] * (n + 1)
    for m_deg, c in enumerate(coeffs):
        if c == 0:
            continue
        for j in range(m_deg + 1):
            out[j] += c * math.comb(m_deg, j) * shift ** (m_deg - j)
    return tuple(out)


def luck_bound(matrix, energy: int, eps: float):
    """Eigenvalue-count increment bound from the characteristic polynomial.

    Shifts the exact characteristic polynomial to the integer energy, strips
    the power of t, and bounds the inclusive count increment
    N(A, E+eps) - N(A, E) by (log 1/C + D log K)/log(1/eps) with
    C = |q(0)| >= 1 and K = max(1, bound on |A - E|).  Returns (bound, lhs);
    lhs <= bound is a theorem, so a violation raises.
    """
    if not 0 < eps < 1:
        raise PreconditionError("eps must lie in (0, 1)")
    if not float(energy).is_integer():
        raise PreconditionError("luck_bound needs an integer energy")
    energy = int(energy)
    rows = _dense_int_rows(matrix)
    n = len(rows)
    coeffs = charpoly_exact(rows)
    shifted = _shift_poly(coeffs, energy)
    k = next((i for i, c in enumerate(shifted) if c != 0), None)
    if k is None:
        raise InternalCheckError("shifted characteristic polynomial vanished")
    c_const = abs(shifted[k])
    inf_norm = max(
        (sum(abs(rows[i][j]) for j in range(n) if j != i) + abs(rows[i][i] - energy)
         for i in range(n)),
        default=0,
    )
    big_k = max(1.0, float(inf_norm))
    bound = (-math.log(c_const) + n * math.log(big_k)) / math.log(1.0 / eps)
    eigs = np.linalg.eigvalsh(np.array(rows, dtype=np.float64)) if n else np.zeros(0)
    lhs = _count_from_eigs(eigs, energy + eps, True) - _count_from_eigs(eigs, energy, True)
    if lhs > bound:
        raise InternalCheckError(
            f"count increment {lhs} exceeds its theorem bound {bound:.6g}"
        )
    return bound, lhs


# ---------------------------------------------------------------------------
# algebraic numbers and the log-Holder constant


def _trim_poly(p):
    while p and p[-1] == 0:
        p.pop()
    return p


def _poly_mod(a, b):
    """Remainder of a divided by b over the rationals (ascending coefficients)."""
    r = a[:]
    while len(r) >= len(b):
        factor = r[-1] / b[-1]
        shift = len(r) - len(b)
        for i, c in enumerate(b):
            r[i + shift] -= factor * c
        r.pop()
        _trim_poly(r)
    return r


def _poly_gcd_is_constant(coeffs) -> bool:
    """True when gcd(m, m') is constant, i.e. m is squarefree."""
    a = _trim_poly([Fraction(c) for c in coeffs])
    b = _trim_poly([Fraction(i * c) for i, c in enumerate(coeffs)][1:])
    while b:
        a, b = b, _poly_mod(a, b)
    return len(a) <= 1


class AlgebraicNumber:
    """E = alpha / b with alpha an algebraic integer given by a monic polynomial.

    The certified root bound covers every conjugate of alpha (Cauchy bound:
    1 + max |coefficient|), which is all the log-Holder constant needs; it is
    never required to be tight.  Squarefreeness of the polynomial is checked;
    irreducibility is not (a reducible input only loosens the constant).
    """

    def __init__(self, min_poly, denominator: int = 1, approx: Optional[float] = None):
        coeffs = tuple(int(c) for c in min_poly)
        if len(coeffs) < 2 or coeffs[-1] != 1:
            raise PreconditionError("min_poly must be monic of degree >= 1")
        if any(float(c) != int(c) for c in min_poly):
            raise PreconditionError("min_poly must have integer coefficients")
        if denominator < 1:
            raise PreconditionError("denominator must be a positive integer")
        if not _poly_gcd_is_constant(coeffs):
            raise PreconditionError("min_poly is not squarefree")
        self.min_poly = coeffs
        self.denominator = int(denominator)
        self.degree = len(coeffs) - 1

        roots = np.roots(list(reversed(coeffs)))
        if self.degree == 1:
            alpha = float(-coeffs[0])
        else:
            if approx is None:
                raise PreconditionError("degree > 1 needs an approximate value to pick the root")
            target = approx * denominator
            alpha_c = roots[np.argmin(np.abs(roots - target))]
            if abs(alpha_c.imag) > 1e-8 * (1 + abs(alpha_c)):
                raise PreconditionError("selected root is not real")
            alpha = float(alpha_c.real)
        scale = max(1.0, max(abs(float(c)) for c in coeffs))
        if abs(_eval_poly(coeffs, alpha)) > 1e-6 * scale * max(1.0, abs(alpha)) ** self.degree:
            raise PreconditionError("numeric value does not satisfy the minimal polynomial")
        self.alpha = alpha
        self.value = alpha / denominator
        self.root_bound = 1.0 + max(abs(float(c)) for c in coeffs[:-1])
        if len(roots) and np.abs(roots).max() > self.root_bound + 1e-9:
            raise InternalCheckError("certified root bound below a numeric root")

    @staticmethod
    def from_rational(value) -> "AlgebraicNumber":
        f = Fraction(value)
        return AlgebraicNumber((-f.numerator, 1), f.denominator)

    def __repr__(self):
        return (f"AlgebraicNumber(value={self.value!r}, degree={self.degree}, "
                f"denominator={self.denominator})")


def _eval_poly(coeffs, x: float) -> float:
    out = 0.0
    for c in reversed(coeffs):
        out = out * x + c
    return out


# Supremum over matrix dimensions D >= 1 of log(4 D^3)/D, attained at D = 2.
_SUP_LOG4D3_OVER_D = math.log(32.0) / 2.0


def algebraic_constant(energy: AlgebraicNumber, big_k: float) -> float:
    """Volume-independent constant C_E with
    N(E + eps) - N(E) <= C_E / log(1/eps) for integer-entry restrictions of
    norm at most big_k.

    The dimension-dependent term is removed by taking its supremum over the
    dimension, so the same constant works for every finite volume.
    """
    if big_k < 1.0:
        raise PreconditionError("K must be at least 1")
    if energy.root_bound < 1.0:
        raise PreconditionError("degenerate certified root bound below 1")
    n = energy.degree
    b = energy.denominator
    out = math.log(b) + math.log(big_k)
    if n > 1:
        out += (n - 1) * (
            _SUP_LOG4D3_OVER_D + math.log(8.0 * energy.root_bound * b) + math.log(big_k)
        )
    return out


# ---------------------------------------------------------------------------
# finite-cluster spectrum catalog


@dataclass(frozen=True)
class CatalogEntry:
    energy: float
    witness_sites: tuple
    witness_size: int
    multiplicity: int


@dataclass
class FiniteSpectrumCatalog:
    """Deduplicated energies arising from finite clusters up to a given size."""

    entries: list
    max_size: int
    atom_values: tuple

    @property
    def energies(self) -> np.ndarray:
        return np.array([e.energy for e in self.entries])

    def min_gap(self) -> float:
        e = self.energies
        return float(np.diff(e).min()) if len(e) > 1 else math.inf

    def nearest(self, energy: float):
        e = self.energies
        k = int(np.argmin(np.abs(e - energy)))
        return self.entries[k], abs(float(e[k]) - energy)

    def to_csv_rows(self):
        rows = [("energy", "multiplicity", "witness_size", "witness_sites")]
        for ent in self.entries:
            sites = ";".join(" ".join(str(x) for x in s) for s in ent.witness_sites)
            rows.append((f"{ent.energy:.17g}", str(ent.multiplicity),
                         str(ent.witness_size), sites))
        return rows


def cluster_spectrum_catalog(catalog: SubgraphCatalog, atom_values=(0.0,)) -> FiniteSpectrumCatalog:
    """Union of spectra of all cataloged subgraphs over all atom assignments.

    Energies are deduplicated within 1e-9; each retained energy records the
    smallest subgraph that produces it and its multiplicity there.
    """
    atom_values = tuple(float(v) for v in atom_values)
    if not atom_values:
        raise PreconditionError("need at least one finite atom value")
    total = sum(len(catalog.classes(s)) * len(atom_values) ** s
                for s in range(1, catalog.max_size + 1))
    if total > ASSIGNMENT_GUARD:
        raise ResourceGuardError(
            f"{total} subgraph/potential assignments exceed guard {ASSIGNMENT_GUARD}",
            reached=total,
        )
    kernel = catalog.kernel
    candidates = []  # (energy, size, order, sites, multiplicity)
    order = 0
    for size in range(1, catalog.max_size + 1):
        for sites in catalog.classes(size):
            base = np.zeros((size, size))
            for i in range(size):
                for j in range(i + 1, size):
                    v = tuple(b - a for a, b in zip(sites[i], sites[j]))
                    c = kernel.coefficient(v)
                    if c:
                        base[i, j] = base[j, i] = c
            shift = kernel.diagonal_shift()
            for assignment in product(atom_values, repeat=size):
                a = base.copy()
                a[np.arange(size), np.arange(size)] = np.array(assignment) + shift
                w = np.linalg.eigvalsh(a)
                k = 0
                while k < size:
                    j = k
                    while j + 1 < size and w[j + 1] - w[k] <= CLUSTER_TOL:
                        j += 1
                    candidates.append((float(w[k]), size, order, sites, j - k + 1))
                    k = j + 1
                order += 1

    candidates.sort(key=lambda t: t[0])
    entries = []
    i = 0
    while i < len(candidates):
        j = i
        while j + 1 < len(candidates) and candidates[j + 1][0] - candidates[j][0] <= CLUSTER_TOL:
            j += 1
        best = min(candidates[i:j + 1], key=lambda t: (t[1], t[2]))
        entries.append(CatalogEntry(best[0], best[3], best[1], best[4]))
        i = j + 1
    return FiniteSpectrumCatalog(entries, catalog.max_size, atom_values)


# ---------------------------------------------------------------------------
# mirror-charge embedding


def mirror_embed(support, q_on_splus, f, energy, kernel: Optional[HoppingKernel] = None):
    """Embed a finitely supported eigenstate into a doubled configuration.

    Reflects the potential across the empty column x1 = a - 1 (a the minimal
    first coordinate of the support) and extends the state antisymmetrically,
    with value 0 on the reflection axis.  The result is verified: the
    assembled restriction satisfies H g = E g on every active site and
    ||g||^2 doubles.

    Returns (region, configuration, g) with g aligned to the row order of
    assemble(configuration, kernel, all region sites).
    """
    support = [tuple(int(x) for x in s) for s in support]
    if not support:
        raise PreconditionError("empty support")
    dim = len(support[0])
    if kernel is None:
        kernel = adjacency_kernel(dim)
    if kernel.hop_range != 1:
        raise PreconditionError("mirror embedding requires a range-1 kernel")
    if kernel.dim != dim:
        raise PreconditionError("kernel dimension does not match the support")
    sset = set(support)
    q = {tuple(int(x) for x in k): float(v) for k, v in q_on_splus.items()}
    fval = {tuple(int(x) for x in k): float(v) for k, v in f.items()}
    energy = float(energy)
    fmax = max((abs(v) for v in fval.values()), default=0.0)
    tol = 1e-12 * (1.0 + abs(energy)) * max(1.0, fmax)

    moves = [v for v, _ in kernel.offsets if any(v)]
    halo = set()
    for s in support:
        for v in moves:
            t = tuple(a + b for a, b in zip(s, v))
            if t not in sset:
                halo.add(t)
    missing = [s for s in support if s not in q] + [t for t in sorted(halo) if t not in q]
    if missing:
        raise PreconditionError(f"potential not provided on {missing[0]} (support + outer boundary)")
    for s in support:
        if not math.isfinite(q[s]):
            raise PreconditionError(f"support site {s} is closed")

    def stencil_sum(k):
        total = 0.0
        for v, c in kernel.offsets:
            if not any(v):
                continue
            j = tuple(a + b for a, b in zip(k, v))
            if j in sset:
                total += c * fval.get(j, 0.0)
        return total

    shift = kernel.diagonal_shift()
    for s in support:
        lhs = (q[s] + shift) * fval.get(s, 0.0) + stencil_sum(s)
        if abs(lhs - energy * fval.get(s, 0.0)) > tol:
            raise PreconditionError(
                f"f is not an eigenvector at energy {energy}: residual at {s}"
            )
    for t in sorted(halo):
        if math.isfinite(q[t]) and abs(stencil_sum(t)) > tol:
            raise PreconditionError(
                f"nonzero coupling residual at active site {t} outside the support"
            )

    a = min(s[0] for s in support)
    axis = a - 1

    def reflect(site):
        return (2 * axis - site[0],) + site[1:]

    s_plus = {k: v for k, v in q.items() if k[0] >= a}
    assignments = dict(s_plus)
    for k, v in s_plus.items():
        assignments[reflect(k)] = v

    pts = np.array(sorted(assignments), dtype=np.int64)
    lo = pts.min(axis=0) - 1
    hi = pts.max(axis=0) + 1
    axes = [np.arange(lo[k], hi[k] + 1, dtype=np.int64) for k in range(dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    region = LatticeRegion.explicit([tuple(s) for s in grid.tolist()], collar=0)

    values = np.zeros(len(region))
    index = region.site_index()
    for k, v in assignments.items():
        values[index[k]] = v
    values.setflags(write=False)
    config = Configuration(region, values)

    matrix = assemble(config, kernel, region.core_indices)
    g = np.zeros(matrix.dim)
    row_of = {tuple(s): i for i, s in enumerate(matrix.sites.tolist())}
    for s in support:
        v = fval.get(s, 0.0)
        g[row_of[s]] = v
        g[row_of[reflect(s)]] = -v

    resid = matrix.to_sparse() @ g - energy * g
    rnorm = float(np.linalg.norm(resid))
    if rnorm > 1e-12 * (1.0 + abs(energy)) * max(1.0, fmax):
        raise InternalCheckError(f"mirror construction residual {rnorm:.3e}")
    f2 = sum(v * v for v in fval.values())
    g2 = float(g @ g)
    if abs(g2 - 2.0 * f2) > 1e-12 * max(1.0, 2.0 * f2):
        raise InternalCheckError("mirrored state norm is not doubled")
    return region, config, g
