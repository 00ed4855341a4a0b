"""Dataset representation and projection quadratic forms.

The test statistics in this package only ever need six scalar quadratic
forms per candidate invalid set B: the forms of the outcome and exposure
under the projector ``P_Z - P_{Z_B}`` and under the residual projector
``R_Z``. :class:`ProjectionFactory` computes them from a single thin QR
factorization of the instrument matrix; per-subset work then happens in the
L-dimensional coordinate space of that basis, so no n-by-n matrix is ever
formed and enumerating many subsets stays cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg

from .exceptions import ConfigError, DataError

# Singular values below this fraction of the largest one count as zero.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SubsetSpec:
    """A candidate set B of invalid instruments among L candidates.

    Instruments in B are treated as exogenous controls; the complement is
    treated as the valid instrument set. Indices are 0-based.

    Parameters
    ----------
    indices : tuple of int
        Sorted, distinct instrument indices in ``range(n_candidates)``.
    n_candidates : int
        Total number of candidate instruments L.
    """

    indices: tuple[int, ...]
    n_candidates: int

    def __post_init__(self) -> None:
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        object.__setattr__(self, "indices", idx)
        if self.n_candidates < 1:
            raise ConfigError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if idx and (idx[0] < 0 or idx[-1] >= self.n_candidates):
            raise ConfigError(
                f"subset indices {idx} out of range for L={self.n_candidates}"
            )
        if len(idx) > self.n_candidates - 1:
            raise ConfigError(
                "at least one instrument must be treated as valid: "
                f"|B|={len(idx)} with L={self.n_candidates}"
            )

    @property
    def size(self) -> int:
        """Cardinality c(B)."""
        return len(self.indices)

    @property
    def complement_size(self) -> int:
        """Number of instruments treated as valid, c(B^c)."""
        return self.n_candidates - len(self.indices)

    def complement(self) -> tuple[int, ...]:
        """Indices of the instruments treated as valid."""
        inside = set(self.indices)
        return tuple(j for j in range(self.n_candidates) if j not in inside)


@dataclass(frozen=True)
class IVDataset:
    """Outcome, exposure, instruments, and optional exogenous covariates.

    Use :meth:`from_arrays` to build a validated instance. ``x`` covariates
    (including any intercept) are removed by :func:`residualize_covariates`
    before test statistics are computed.

    Attributes
    ----------
    y : ndarray of shape (n,)
        Outcome.
    d : ndarray of shape (n,)
        Exposure.
    z : ndarray of shape (n, L)
        Candidate instruments.
    x : ndarray of shape (n, p) or None
        Exogenous covariates, including the intercept column when used.
    instrument_names : tuple of str
        One name per instrument column, used in error messages and reports.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray | None = None
    instrument_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_instruments(self) -> int:
        return self.z.shape[1]

    @property
    def n_covariates(self) -> int:
        return 0 if self.x is None else self.x.shape[1]

    @classmethod
    def from_arrays(
        cls,
        y,
        d,
        z,
        x=None,
        add_intercept: bool = False,
        instrument_names: Sequence[str] | None = None,
    ) -> "IVDataset":
        """Build and validate a dataset from array-likes.

        Parameters
        ----------
        y, d : array-like of shape (n,)
            Outcome and exposure.
        z : array-like of shape (n, L)
            Candidate instruments.
        x : array-like of shape (n, p), optional
            Exogenous covariates.
        add_intercept : bool
            Append an intercept column to ``x`` (creating it if absent).
            Standard practice for observational data; leave off for
            mean-zero simulated designs.
        instrument_names : sequence of str, optional
            Column names for ``z``; defaults to ``z1..zL``.
        """
        y = np.asarray(y, dtype=float).reshape(-1)
        d = np.asarray(d, dtype=float).reshape(-1)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[0] == 1 and y.shape[0] != 1:
            z = z.T
        if x is not None:
            x = np.atleast_2d(np.asarray(x, dtype=float))
            if x.shape[0] == 1 and y.shape[0] != 1:
                x = x.T
        if add_intercept:
            ones = np.ones((y.shape[0], 1))
            x = ones if x is None else np.column_stack([x, ones])
        if instrument_names is None:
            names = tuple(f"z{j + 1}" for j in range(z.shape[1]))
        else:
            names = tuple(str(s) for s in instrument_names)
        data = cls(y=y, d=d, z=z, x=x, instrument_names=names)
        return validate_dataset(data)


def _rank_and_deficient_columns(mat: np.ndarray) -> tuple[int, list[int]]:
    """Numerical rank plus the columns a pivoted QR identifies as redundant."""
    if mat.shape[1] == 0:
        return 0, []
    _, r, piv = scipy.linalg.qr(mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_RTOL * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    return rank, sorted(int(j) for j in piv[rank:])


def validate_dataset(data: IVDataset) -> IVDataset:
    """Check shapes, finiteness, sample size, and instrument rank.

    Returns the dataset unchanged when every invariant holds.

    Raises
    ------
    DataError
        On dimension mismatch, non-finite entries, too few observations
        (``n <= L + p + 1``), or rank-deficient ``z`` / ``[x z]``; the
        collinearity message names the offending columns.
    """
    n = data.y.shape[0]
    if data.d.shape[0] != n or data.z.shape[0] != n:
        raise DataError(
            f"inconsistent lengths: y has {n} rows, d has {data.d.shape[0]}, "
            f"z has {data.z.shape[0]}"
        )
    if data.z.ndim != 2:
        raise DataError(f"z must be a matrix, got shape {data.z.shape}")
    if len(data.instrument_names) != data.z.shape[1]:
        raise DataError(
            f"{len(data.instrument_names)} instrument names for "
            f"{data.z.shape[1]} columns"
        )
    for name, arr in (("y", data.y), ("d", data.d), ("z", data.z)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite values in {name}")
    p = data.n_covariates
    if data.x is not None:
        if data.x.shape[0] != n:
            raise DataError(f"x has {data.x.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(data.x)):
            raise DataError("non-finite values in x")
    L = data.z.shape[1]
    if L < 1:
        raise DataError("at least one instrument column is required")
    if n <= L + p + 1:
        raise DataError(
            f"too few observations: n={n} must exceed L + p + 1 = {L + p + 1}"
        )
    rank, bad = _rank_and_deficient_columns(data.z)
    if rank < L:
        cols = ", ".join(data.instrument_names[j] for j in bad)
        raise DataError(f"collinear instruments: columns [{cols}] are redundant")
    if data.x is not None:
        xrank, xbad = _rank_and_deficient_columns(data.x)
        if xrank < p:
            raise DataError(
                f"collinear covariates: columns {xbad} of x are redundant"
            )
        jrank, jbad = _rank_and_deficient_columns(np.column_stack([data.x, data.z]))
        if jrank < p + L:
            raise DataError(
                f"covariates and instruments are jointly collinear "
                f"(combined rank {jrank} < {p + L})"
            )
    return data


def residualize_covariates(data: IVDataset) -> IVDataset:
    """Project the covariates out of y, d, and every instrument column.

    Replaces each of y, d, and the columns of z by their least-squares
    residuals on x and drops x, reducing the model with exogenous covariates
    to the covariate-free form; inference on the causal effect is unchanged.

    Raises
    ------
    DataError
        If the dataset has no covariates or x is rank deficient.
    """
    if data.x is None:
        raise DataError("dataset has no covariates to residualize")
    q, _ = np.linalg.qr(data.x)
    if np.linalg.matrix_rank(data.x, tol=None) < data.x.shape[1]:
        raise DataError("covariate matrix x is rank deficient")

    def resid(v: np.ndarray) -> np.ndarray:
        return v - q @ (q.T @ v)

    out = replace(
        data, y=resid(data.y), d=resid(data.d), z=resid(data.z), x=None
    )
    return out


def enumerate_subsets(n_candidates: int, size: int) -> Iterator[SubsetSpec]:
    """Yield all candidate invalid sets of a given cardinality.

    Produces exactly ``C(n_candidates, size)`` subsets in lexicographic
    order of their index tuples.

    Parameters
    ----------
    n_candidates : int
        Total number of candidate instruments L.
    size : int
        Cardinality of each subset; must satisfy ``0 <= size <= L - 1``.
    """
    if not 0 <= size <= n_candidates - 1:
        raise ConfigError(
            f"subset size must lie in [0, L-1] = [0, {n_candidates - 1}], got {size}"
        )
    for combo in itertools.combinations(range(n_candidates), size):
        yield SubsetSpec(indices=combo, n_candidates=n_candidates)


@dataclass(frozen=True)
class ProjectionCache:
    """Quadratic forms of (y, d) for one candidate invalid set.

    ``q*`` forms use the middle projector ``P_Z - P_{Z_B}`` (the span of the
    valid instruments after partialling out the candidate invalid ones);
    ``r*`` forms use the residual projector ``R_Z``. These six numbers, with
    the two degrees of freedom, determine the Anderson-Rubin, Wald, Sargan,
    and conditional likelihood ratio statistics at every hypothesized effect.
    """

    subset: SubsetSpec
    q_yy: float
    q_yd: float
    q_dd: float
    r_yy: float
    r_yd: float
    r_dd: float
    df_num: int
    df_den: int
    n: int

    def q_form(self, beta0: float) -> float:
        """Quadratic form of ``y - d*beta0`` under ``P_Z - P_{Z_B}``."""
        return self.q_yy - 2.0 * beta0 * self.q_yd + beta0**2 * self.q_dd

    def r_form(self, beta0: float) -> float:
        """Quadratic form of ``y - d*beta0`` under ``R_Z``."""
        return self.r_yy - 2.0 * beta0 * self.r_yd + beta0**2 * self.r_dd


def _clip_nonneg(value: float) -> float:
    # Quadratic forms of idempotent matrices; tiny negatives are rounding.
    return 0.0 if value < 0.0 else value


class ProjectionFactory:
    """Shared factorization of one dataset, serving caches for many subsets.

    The instrument matrix is factorized once (thin QR, O(n L^2)); each
    subset then costs a small QR in the L-dimensional coordinate space.
    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, data: IVDataset):
        if data.x is not None:
            data = residualize_covariates(data)
        self.data = data
        self.n = data.n
        self.n_instruments = data.z.shape[1]
        q, r = np.linalg.qr(data.z)
        diag = np.abs(np.diag(r))
        if diag.min() <= RANK_RTOL * diag.max():
            raise DataError("instrument matrix is numerically rank deficient")
        self._basis = q
        self._coords = r  # z_B in basis coordinates is r[:, B]
        self._w_y = q.T @ data.y
        self._w_d = q.T @ data.d
        self._tot = (
            float(data.y @ data.y),
            float(data.y @ data.d),
            float(data.d @ data.d),
        )
        self._pz = (
            float(self._w_y @ self._w_y),
            float(self._w_y @ self._w_d),
            float(self._w_d @ self._w_d),
        )

    def cache(self, subset: SubsetSpec) -> ProjectionCache:
        """Quadratic forms for one candidate invalid set."""
        return self.caches([subset])[0]

    def caches(self, subsets: Sequence[SubsetSpec]) -> list[ProjectionCache]:
        """Quadratic forms for many same-size subsets, batched.

        Subset bases are orthonormalized with one batched QR when all
        subsets share a cardinality, which is the shape the union procedure
        produces.
        """
        if not subsets:
            return []
        sizes = {s.size for s in subsets}
        L = self.n_instruments
        for s in subsets:
            if s.n_candidates != L:
                raise ConfigError(
                    f"subset declared over {s.n_candidates} candidates, "
                    f"dataset has {L}"
                )
        tot_yy, tot_yd, tot_dd = self._tot
        pz_yy, pz_yd, pz_dd = self._pz
        r_yy = _clip_nonneg(tot_yy - pz_yy)
        r_dd = _clip_nonneg(tot_dd - pz_dd)
        r_yd = tot_yd - pz_yd
        df_den = self.n - L

        if sizes == {0}:
            s_terms = np.zeros((len(subsets), 3))
        elif len(sizes) == 1:
            k = sizes.pop()
            stacked = np.stack([self._coords[:, s.indices] for s in subsets])
            basis = np.linalg.qr(stacked)[0]  # (m, L, k)
            t_y = np.einsum("mlk,l->mk", basis, self._w_y)
            t_d = np.einsum("mlk,l->mk", basis, self._w_d)
            s_terms = np.column_stack(
                [
                    np.einsum("mk,mk->m", t_y, t_y),
                    np.einsum("mk,mk->m", t_y, t_d),
                    np.einsum("mk,mk->m", t_d, t_d),
                ]
            )
        else:
            return [c for s in subsets for c in self.caches([s])]

        out = []
        for spec, (s_yy, s_yd, s_dd) in zip(subsets, s_terms):
            out.append(
                ProjectionCache(
                    subset=spec,
                    q_yy=_clip_nonneg(pz_yy - s_yy),
                    q_yd=float(pz_yd - s_yd),
                    q_dd=_clip_nonneg(pz_dd - s_dd),
                    r_yy=r_yy,
                    r_yd=float(r_yd),
                    r_dd=r_dd,
                    df_num=L - spec.size,
                    df_den=df_den,
                    n=self.n,
                )
            )
        return out


def build_projection_cache(data: IVDataset, subset: SubsetSpec) -> ProjectionCache:
    """Quadratic forms for one subset of one dataset.

    Convenience wrapper around :class:`ProjectionFactory`; when evaluating
    many subsets of the same dataset, build the factory once instead.
    """
    return ProjectionFactory(data).cache(subset)
