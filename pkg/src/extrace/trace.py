"""Feedback traces on partitioned contractions.

Two routes to the same value: the path-summing series (aggregate the
direct block plus every loop excursion) and the closed-form witness
construction built from a pseudoinverse of (id - loop block).  On
contractions both are defined and must agree; the closed form is taken
as canonical since it carries no truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    LinalgError,
    Partition,
    PartitionedMap,
    adjoint,
    classify,
    direct_sum,
    operator_norm,
    random_contraction,
    random_isometry,
    random_unitary,
    swap_matrix,
    two_block,
)

__all__ = [
    "AxiomReport",
    "CnuDecomposition",
    "KiTraceError",
    "SeriesDivergence",
    "TraceConfig",
    "TraceResult",
    "check_trace_axioms",
    "cnu_decompose",
    "ex",
    "ex_kernel_image",
    "ex_series",
    "halmos_dilation",
]


class SeriesDivergence(ArithmeticError):
    """The path series does not converge in norm."""


class KiTraceError(ArithmeticError):
    """No witness pair exists within tolerance (not ki-traceable)."""

    def __init__(self, msg, residual_in: float, residual_out: float):
        super().__init__(msg)
        self.residual_in = residual_in
        self.residual_out = residual_out


@dataclass(frozen=True)
class TraceConfig:
    series_tol: float = 1e-10
    max_terms: int = 100_000
    ki_residual_tol: float = 1e-8
    compare_tol: float = 1e-8
    classify_tol: float = 1e-9
    blowup: float = 1e6

    def __post_init__(self):
        if min(self.series_tol, self.ki_residual_tol, self.compare_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


@dataclass(frozen=True)
class TraceResult:
    value: np.ndarray
    method: str  # series | kernel_image | both_agree
    terms_used: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class CnuDecomposition:
    unitary_dim: int
    basis_change: np.ndarray
    f0: np.ndarray
    f1: np.ndarray


def _loop_blocks(f: PartitionedMap, loop_label: str):
    u_rows = f.row_partition.size(loop_label)
    u_cols = f.col_partition.size(loop_label)
    if u_rows != u_cols:
        raise LinalgError(
            f"loop block {loop_label!r} is {u_rows}x{u_cols}; it must be square"
        )
    r0, r1 = f.row_partition.span(loop_label)
    c0, c1 = f.col_partition.span(loop_label)
    keep_rows = np.r_[0:r0, r1 : f.matrix.shape[0]]
    keep_cols = np.r_[0:c0, c1 : f.matrix.shape[1]]
    f_ba = f.matrix[np.ix_(keep_rows, keep_cols)]
    f_bu = f.matrix[np.ix_(keep_rows, np.arange(c0, c1))]
    f_ua = f.matrix[np.ix_(np.arange(r0, r1), keep_cols)]
    f_uu = f.matrix[r0:r1, c0:c1]
    return f_ba, f_bu, f_ua, f_uu


def _tail_ratio(f_uu: np.ndarray) -> float:
    """Per-term decay estimate: the smallest m-th root of ||f_uu^m|| over
    probe powers m = dim and 2*dim.  Contractions decay geometrically only
    after the completely-nonunitary mixing length, so a one-step estimate
    would be too pessimistic."""
    dim = f_uu.shape[0]
    if dim == 0:
        return 0.0
    probe = np.linalg.matrix_power(f_uu, dim)
    r = operator_norm(probe) ** (1.0 / dim)
    probe2 = probe @ probe
    r2 = operator_norm(probe2) ** (1.0 / (2 * dim))
    return min(r, r2)


def ex_series(f: PartitionedMap, loop_label: str, cfg: TraceConfig = TraceConfig()) -> TraceResult:
    """Partial sums of f_BA + sum_n f_BU f_UU^n f_UA with a geometric
    tail certificate as the stopping rule."""
    f_ba, f_bu, f_ua, f_uu = _loop_blocks(f, loop_label)
    if f_uu.shape[0] == 0:
        return TraceResult(f_ba.copy(), "series", 0, 0.0, True)

    ratio = _tail_ratio(f_uu)
    total = f_ba.astype(np.complex128).copy()
    left = f_bu.copy()  # f_BU @ f_UU^n
    terms = 0
    term_norm = math.inf
    for n in range(cfg.max_terms):
        term = left @ f_ua
        if not np.all(np.isfinite(term)):
            raise SeriesDivergence(f"non-finite entries at series term {n}")
        total += term
        terms = n + 1
        term_norm = operator_norm(term)
        if operator_norm(total) > cfg.blowup:
            raise SeriesDivergence(
                f"partial sum exceeded {cfg.blowup:g} at term {n}; "
                "the series does not converge in norm"
            )
        if term_norm <= cfg.series_tol:
            tail = 0.0 if term_norm == 0.0 else (
                term_norm * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
            )
            if tail <= cfg.series_tol:
                return TraceResult(total, "series", terms, term_norm, True)
        left = left @ f_uu
    return TraceResult(total, "series", terms, term_norm, False)


def _pinv(m: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    # Singular values below rcond * sigma_max count as exact zeros, which
    # keeps unitary loop blocks (where id - f_UU is singular) traceable.
    return np.linalg.pinv(m, rcond=rcond)


def ex_kernel_image(
    f: PartitionedMap, loop_label: str, cfg: TraceConfig = TraceConfig()
) -> TraceResult:
    """Closed-form trace via witnesses i, k with
    f_UA = (id - f_UU) i  and  f_BU = k (id - f_UU)."""
    f_ba, f_bu, f_ua, f_uu = _loop_blocks(f, loop_label)
    if f_uu.shape[0] == 0:
        return TraceResult(f_ba.copy(), "kernel_image", 0, 0.0, True)

    h = np.eye(f_uu.shape[0]) - f_uu
    h_pinv = _pinv(h)
    i_wit = h_pinv @ f_ua
    k_wit = f_bu @ h_pinv
    scale = max(operator_norm(f.matrix), 1.0)
    res_in = operator_norm(h @ i_wit - f_ua) / scale
    res_out = operator_norm(k_wit @ h - f_bu) / scale
    residual = max(res_in, res_out)
    if residual > cfg.ki_residual_tol:
        raise KiTraceError(
            "not ki-traceable: witness residuals "
            f"{res_in:.3e} (input) / {res_out:.3e} (output) exceed "
            f"{cfg.ki_residual_tol:g}",
            res_in,
            res_out,
        )
    value = f_ba + k_wit @ f_ua
    alt = f_ba + f_bu @ i_wit
    agree = operator_norm(value - alt)
    if agree > cfg.compare_tol * scale:
        raise KiTraceError(
            f"witness forms disagree by {agree:.3e}", res_in, res_out
        )
    return TraceResult(value, "kernel_image", 0, residual, True)


def ex(f: PartitionedMap, loop_label: str, cfg: TraceConfig = TraceConfig()) -> TraceResult:
    """Total trace on contractions: closed form as the canonical value,
    series as the cross-check.  Non-contractions get whichever route
    succeeds."""
    if f.row_partition.size(loop_label) != f.col_partition.size(loop_label):
        raise LinalgError(f"loop block {loop_label!r} differs between partitions")
    if f.row_partition.size(loop_label) == 0:
        f_ba, _, _, _ = _loop_blocks(f, loop_label)
        return TraceResult(f_ba.copy(), "both_agree", 0, 0.0, True)

    contraction = classify(f.matrix, cfg.classify_tol) != "expansion"
    if contraction:
        ki = ex_kernel_image(f, loop_label, cfg)
        series = ex_series(f, loop_label, cfg)
        if not series.converged:
            raise SeriesDivergence(
                "series failed to converge on a contraction input "
                f"(last increment {series.residual:.3e})"
            )
        gap = operator_norm(ki.value - series.value)
        if gap > cfg.compare_tol:
            raise ArithmeticError(
                f"internal consistency failure: series and kernel-image "
                f"values differ by {gap:.3e}"
            )
        return TraceResult(ki.value, "both_agree", series.terms_used, gap, True)

    try:
        return ex_kernel_image(f, loop_label, cfg)
    except KiTraceError:
        return ex_series(f, loop_label, cfg)


# ---------------------------------------------------------------------------
# Structure theorems


def _defect(m: np.ndarray) -> np.ndarray:
    """sqrt(id - m^H m) via Hermitian eigendecomposition, eigenvalues
    clamped at zero."""
    gram = np.eye(m.shape[1]) - adjoint(m) @ m
    vals, vecs = np.linalg.eigh(gram)
    vals = np.clip(vals.real, 0.0, None)
    return (vecs * np.sqrt(vals)) @ adjoint(vecs)


def halmos_dilation(f: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Embed a contraction f: A -> B into the unitary
    [[-f^H, D_f], [D_{f^H}, f]] on B (+) A."""
    f = np.asarray(f, dtype=np.complex128)
    if operator_norm(f) > 1.0 + tol:
        raise LinalgError("halmos_dilation requires a contraction")
    d_f = _defect(f)
    d_fh = _defect(adjoint(f))
    top = np.hstack([-adjoint(f), d_f])
    bot = np.hstack([d_fh, f])
    return np.vstack([top, bot])


def _kernel_basis(m: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of ker(m) for Hermitian PSD m."""
    vals, vecs = np.linalg.eigh(m)
    return vecs[:, np.abs(vals) <= tol]


def _intersect(basis_a: np.ndarray, basis_b: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the intersection of two column spans."""
    if basis_a.shape[1] == 0 or basis_b.shape[1] == 0:
        return np.zeros((basis_a.shape[0], 0), dtype=np.complex128)
    # v = basis_a c lies in span(basis_b) iff (id - P_b) basis_a c = 0.
    p_b = basis_b @ adjoint(basis_b)
    m = basis_a - p_b @ basis_a
    _, svals, vh = np.linalg.svd(m, full_matrices=True)
    svals = np.concatenate([svals, np.zeros(basis_a.shape[1] - len(svals))])
    null = adjoint(vh)[:, svals <= tol]
    out = basis_a @ null
    if out.shape[1] == 0:
        return out
    q, _ = np.linalg.qr(out)
    return q


def cnu_decompose(f: np.ndarray, tol: float = 1e-8) -> CnuDecomposition:
    """Split a square contraction into its unitary part and its
    completely nonunitary part.

    The unitary subspace is the intersection, over powers up to the
    dimension, of the norm-preserving subspaces of f^n and (f^H)^n; the
    finite descending chain makes dim(f) powers sufficient.
    """
    f = np.asarray(f, dtype=np.complex128)
    n = f.shape[0]
    if f.shape[0] != f.shape[1]:
        raise LinalgError("cnu_decompose requires a square matrix")
    if operator_norm(f) > 1.0 + tol:
        raise LinalgError("cnu_decompose requires a contraction")

    basis = np.eye(n, dtype=np.complex128)
    power = np.eye(n, dtype=np.complex128)
    for _ in range(n):
        power = power @ f
        for g in (power, adjoint(power)):
            kern = _kernel_basis(np.eye(n) - adjoint(g) @ g, tol)
            basis = _intersect(basis, kern, tol)
        if basis.shape[1] == 0:
            break

    k = basis.shape[1]
    if k == 0:
        basis_change = np.eye(n, dtype=np.complex128)
    else:
        # Full SVD: leading k left vectors span the unitary subspace, the
        # rest its orthogonal complement, and the stack is exactly unitary.
        u_full, _, _ = np.linalg.svd(basis, full_matrices=True)
        basis_change = u_full

    conj = adjoint(basis_change) @ f @ basis_change
    f0 = conj[:k, :k]
    f1 = conj[k:, k:]
    off = max(operator_norm(conj[:k, k:]), operator_norm(conj[k:, :k])) if 0 < k < n else 0.0
    if off > max(tol, 1e-7):
        raise LinalgError(
            f"block off-diagonal mass {off:.3e} after basis change; "
            "numerical failure in the unitary/CNU split"
        )
    if k and classify(f0, max(tol, 1e-7)) != "unitary":
        raise LinalgError("recovered unitary part failed the unitarity check")
    if f1.shape[0]:
        tail = operator_norm(np.linalg.matrix_power(f1, f1.shape[0]))
        if tail >= 1.0:
            raise LinalgError(
                f"completely nonunitary part has ||f1^dim|| = {tail:.6f} >= 1"
            )
    return CnuDecomposition(k, basis_change, f0, f1)


# ---------------------------------------------------------------------------
# Axiom checking


@dataclass
class AxiomCheck:
    name: str
    cases: int = 0
    failures: int = 0
    worst_deviation: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class AxiomReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_json(self) -> dict:
        return {
            name: {
                "cases": c.cases,
                "failures": c.failures,
                "worst_deviation": c.worst_deviation,
                "passed": c.passed,
                "notes": c.notes[:10],
            }
            for name, c in self.checks.items()
        }


_AXIOMS = (
    "naturality_input",
    "naturality_output",
    "dinaturality",
    "superposing",
    "vanishing_i",
    "vanishing_ii",
    "yanking",
)


def _record(check: AxiomCheck, deviation: float, tol: float, context: str):
    check.cases += 1
    check.worst_deviation = max(check.worst_deviation, deviation)
    if deviation > tol:
        check.failures += 1
        check.notes.append(f"{context}: deviation {deviation:.3e}")


def check_trace_axioms(
    seed: int,
    n_cases: int,
    cfg: TraceConfig = TraceConfig(),
    max_dim: int = 4,
) -> AxiomReport:
    """Sample random contraction instances per axiom and assert the
    Kleene-equality form at cfg.compare_tol.  Failures are collected in
    the report, not raised."""
    checks = {name: AxiomCheck(name) for name in _AXIOMS}
    tol = cfg.compare_tol
    root = np.random.SeedSequence(seed)
    for case, ss in enumerate(root.spawn(n_cases)):
        rng = np.random.default_rng(ss)
        a, b, u = (int(rng.integers(1, max_dim + 1)) for _ in range(3))
        ctx = f"case {case} (a={a}, b={b}, u={u})"

        # Naturality: h ex(f) g = ex((h + id) f (g + id)).
        f = two_block(random_contraction(b + u, a + u, rng), u)
        g = random_contraction(a, a, rng)
        h = random_contraction(b, b, rng)
        lhs = h @ ex(f, "U", cfg).value @ g
        wrapped = two_block(
            direct_sum(h, np.eye(u)) @ f.matrix @ direct_sum(g, np.eye(u)), u
        )
        rhs = ex(wrapped, "U", cfg).value
        _record(checks["naturality_input"], operator_norm(lhs - rhs), tol, ctx)

        # Output-side naturality with non-square g, h.
        a2, b2 = (int(rng.integers(1, max_dim + 1)) for _ in range(2))
        g2 = random_contraction(a, a2, rng)
        h2 = random_contraction(b2, b, rng)
        lhs = h2 @ ex(f, "U", cfg).value @ g2
        wrapped = two_block(
            direct_sum(h2, np.eye(u)) @ f.matrix @ direct_sum(g2, np.eye(u)), u
        )
        rhs = ex(wrapped, "U", cfg).value
        _record(checks["naturality_output"], operator_norm(lhs - rhs), tol, ctx)

        # Dinaturality: ex^U((id + g) f) = ex^{U'}(f (id + g)).
        u2 = int(rng.integers(1, max_dim + 1))
        fd = random_contraction(b + u2, a + u, rng)
        gd = random_contraction(u, u2, rng)
        left = two_block(direct_sum(np.eye(b), gd) @ fd, u)
        right = two_block(fd @ direct_sum(np.eye(a), gd), u2)
        dev = operator_norm(ex(left, "U", cfg).value - ex(right, "U", cfg).value)
        _record(checks["dinaturality"], dev, tol, ctx)

        # Superposing: g (+) ex(f) = ex(g (+) f).
        c, d = (int(rng.integers(1, max_dim + 1)) for _ in range(2))
        gs = random_contraction(d, c, rng)
        lhs = direct_sum(gs, ex(f, "U", cfg).value)
        stacked = two_block(direct_sum(gs, f.matrix), u)
        rhs = ex(stacked, "U", cfg).value
        _record(checks["superposing"], operator_norm(lhs - rhs), tol, ctx)

        # Vanishing I: tracing a zero-dimensional loop is the identity op.
        fv = random_contraction(b, a, rng)
        padded = two_block(fv, 0)
        dev = operator_norm(ex(padded, "U", cfg).value - fv)
        _record(checks["vanishing_i"], dev, tol, ctx)

        # Vanishing II: ex^U(ex^V(f)) = ex^{U+V}(f).
        v = int(rng.integers(1, max_dim + 1))
        fw = random_contraction(b + u + v, a + u + v, rng)
        inner = ex(two_block(fw, v), "U", cfg).value
        nested = ex(two_block(inner, u), "U", cfg).value
        flat = ex(two_block(fw, u + v), "U", cfg).value
        _record(checks["vanishing_ii"], operator_norm(nested - flat), tol, ctx)

        # Yanking: ex^U(swap) = id.
        swap = two_block(swap_matrix(u, u), u)
        dev = operator_norm(ex(swap, "U", cfg).value - np.eye(u))
        _record(checks["yanking"], dev, tol, ctx)

    return AxiomReport(checks)
