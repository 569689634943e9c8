"""Discrete-time linear shift-invariant processes.

A process is carried primarily as a finitely-supported matrix-valued
kernel over integer time; the frequency-domain view samples its
transform on a uniform grid over [0, 2*pi).  Looped processes generally
have infinite time support, so loop results exist only as frequency
responses.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import LinalgError, as_matrix, classify, matrix_from_literal, matrix_to_literal
from .trace import TraceConfig, ex, two_block

__all__ = [
    "FirKernel",
    "FrequencyResponse",
    "Signal",
    "apply_kernel",
    "convolve",
    "dtft",
    "kernel_from_response",
    "lsi_classify",
    "lsi_ex",
    "parseval_norm",
    "response_to_csv",
]

DEFAULT_GRID = 256


@dataclass(frozen=True)
class FirKernel:
    """Finitely many matrix taps, one per integer time offset."""

    out_ports: tuple[str, ...]
    in_ports: tuple[str, ...]
    taps: dict  # int offset -> ndarray (out x in)

    def __post_init__(self):
        object.__setattr__(self, "out_ports", tuple(self.out_ports))
        object.__setattr__(self, "in_ports", tuple(self.in_ports))
        shape = (len(self.out_ports), len(self.in_ports))
        fixed = {}
        for t, m in self.taps.items():
            m = as_matrix(m)
            if m.shape != shape:
                raise LinalgError(
                    f"tap at t={t} has shape {m.shape}, ports require {shape}"
                )
            fixed[int(t)] = m
        object.__setattr__(self, "taps", fixed)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.out_ports), len(self.in_ports)

    @property
    def support(self) -> tuple[int, int]:
        """Inclusive (min, max) time offsets; (0, 0) for the empty kernel."""
        if not self.taps:
            return 0, 0
        return min(self.taps), max(self.taps)

    def to_json(self) -> dict:
        return {
            "in_ports": list(self.in_ports),
            "out_ports": list(self.out_ports),
            "taps": {str(t): matrix_to_literal(m) for t, m in sorted(self.taps.items())},
        }

    @classmethod
    def from_json(cls, obj) -> "FirKernel":
        return cls(
            tuple(obj["out_ports"]),
            tuple(obj["in_ports"]),
            {int(t): matrix_from_literal(m) for t, m in obj["taps"].items()},
        )


def delta_kernel(ports) -> FirKernel:
    ports = tuple(ports)
    n = len(ports)
    return FirKernel(ports, ports, {0: np.eye(n, dtype=np.complex128)})


def delay_kernel(port: str, t: int) -> FirKernel:
    return FirKernel((port,), (port,), {int(t): np.eye(1, dtype=np.complex128)})


@dataclass(frozen=True)
class FrequencyResponse:
    """Per-frequency matrices on the uniform grid 2*pi*j/N."""

    grid: np.ndarray
    samples: np.ndarray  # (N, out, in)
    out_ports: tuple[str, ...]
    in_ports: tuple[str, ...]

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        samples = np.asarray(self.samples, dtype=np.complex128)
        if grid.size < 2:
            raise LinalgError("frequency grid needs at least 2 points")
        if samples.shape[0] != grid.size:
            raise LinalgError("one sample per grid frequency required")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "out_ports", tuple(self.out_ports))
        object.__setattr__(self, "in_ports", tuple(self.in_ports))

    @property
    def grid_size(self) -> int:
        return self.grid.size


@dataclass(frozen=True)
class Signal:
    """Finitely supported vector-valued signal over integer time."""

    ports: tuple[str, ...]
    samples: dict  # int t -> complex vector

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))
        fixed = {}
        for t, v in self.samples.items():
            v = np.asarray(v, dtype=np.complex128).reshape(-1)
            if v.size != len(self.ports):
                raise LinalgError(f"signal sample at t={t} has wrong port count")
            fixed[int(t)] = v
        object.__setattr__(self, "samples", fixed)

    def norm_squared(self) -> float:
        return float(sum(np.vdot(v, v).real for v in self.samples.values()))


def _uniform_grid(n: int) -> np.ndarray:
    if n < 2:
        raise LinalgError("grid size must be >= 2")
    return 2.0 * np.pi * np.arange(n) / n


def dtft(k: FirKernel, grid_size: int = DEFAULT_GRID) -> FrequencyResponse:
    """Sample sum_t tap[t] e^{-i w t} on the uniform grid; exact finite sum."""
    grid = _uniform_grid(grid_size)
    out, inp = k.shape
    samples = np.zeros((grid_size, out, inp), dtype=np.complex128)
    for t, m in k.taps.items():
        phase = np.exp(-1j * grid * t)
        samples += phase[:, None, None] * m[None, :, :]
    return FrequencyResponse(grid, samples, k.out_ports, k.in_ports)


def convolve(g: FirKernel, f: FirKernel) -> FirKernel:
    """Tap-wise matrix convolution g * f (apply f first)."""
    if g.in_ports != f.out_ports:
        raise LinalgError(
            f"port mismatch: g consumes {g.in_ports}, f produces {f.out_ports}"
        )
    taps: dict = {}
    for t1, m1 in g.taps.items():
        for t2, m2 in f.taps.items():
            t = t1 + t2
            prod = m1 @ m2
            if t in taps:
                taps[t] = taps[t] + prod
            else:
                taps[t] = prod
    return FirKernel(g.out_ports, f.in_ports, taps)


def apply_kernel(k: FirKernel, s: Signal) -> Signal:
    if k.in_ports != s.ports:
        raise LinalgError(f"port mismatch: kernel takes {k.in_ports}, signal has {s.ports}")
    out: dict = {}
    for t1, m in k.taps.items():
        for t2, v in s.samples.items():
            t = t1 + t2
            prod = m @ v
            if t in out:
                out[t] = out[t] + prod
            else:
                out[t] = prod
    return Signal(k.out_ports, out)


def lsi_classify(r: FrequencyResponse, tol: float = 1e-9) -> str:
    """'lsi_contraction' when every grid sample is a contraction.

    Per-frequency contraction is sufficient for the time-domain map to be
    one; necessity is only conjectured, hence 'not_certified' rather than
    a negative verdict.
    """
    for sample in r.samples:
        if classify(sample, tol) == "expansion":
            return "not_certified"
    return "lsi_contraction"


def lsi_ex(
    r: FrequencyResponse, loop_ports: int, cfg: TraceConfig = TraceConfig()
) -> FrequencyResponse:
    """Trace out the trailing loop_ports ports at every grid frequency."""
    n_out, n_in = r.samples.shape[1], r.samples.shape[2]
    if loop_ports < 1 or loop_ports > min(n_out, n_in):
        raise LinalgError(f"cannot loop {loop_ports} ports on shape {(n_out, n_in)}")
    if r.out_ports[-loop_ports:] != r.in_ports[-loop_ports:]:
        raise LinalgError("trailing loop ports differ between input and output")
    traced = []
    for omega, sample in zip(r.grid, r.samples):
        try:
            traced.append(ex(two_block(sample, loop_ports), "U", cfg).value)
        except ArithmeticError as e:
            raise ArithmeticError(f"loop trace failed at omega={omega:.6f}: {e}") from e
    return FrequencyResponse(
        r.grid,
        np.stack(traced),
        r.out_ports[:-loop_ports],
        r.in_ports[:-loop_ports],
    )


def parseval_norm(s: Signal, grid_size: int) -> float:
    """Frequency-domain squared norm via the uniform Riemann sum.

    Exact (to roundoff) once the grid exceeds the support width, since
    the transform is a trigonometric polynomial.
    """
    lo, hi = (min(s.samples), max(s.samples)) if s.samples else (0, 0)
    width = hi - lo + 1
    if grid_size < max(2, width + 1):
        raise LinalgError(
            f"grid size {grid_size} too small for support width {width}"
        )
    grid = _uniform_grid(grid_size)
    total = 0.0
    spectrum = np.zeros((grid_size, len(s.ports)), dtype=np.complex128)
    for t, v in s.samples.items():
        spectrum += np.exp(-1j * grid * t)[:, None] * v[None, :]
    total = float(np.sum(np.abs(spectrum) ** 2) / grid_size)
    return total


def kernel_from_response(
    r: FrequencyResponse, ports_hint=None, alias_tol: float = 1e-9
) -> FirKernel:
    """Truncated reconstruction: inverse DFT of the grid samples, taps on
    t in [-N/2, N/2).  Warns when boundary taps carry mass, the telltale
    of a response that did not come from a kernel of support < N."""
    n = r.grid_size
    # samples[j] = sum_t tap[t] e^{-2 pi i j t / N}  -> inverse DFT over j.
    taps_dft = np.fft.ifft(r.samples, axis=0)
    taps: dict = {}
    half = n // 2
    boundary_mass = 0.0
    for idx in range(n):
        t = idx if idx < n - half else idx - n
        m = taps_dft[idx]
        mass = float(np.abs(m).max()) if m.size else 0.0
        if mass <= alias_tol:
            continue
        taps[t] = m
        if abs(t) >= half - 1:
            boundary_mass = max(boundary_mass, mass)
    if boundary_mass > alias_tol:
        warnings.warn(
            "reconstructed taps reach the grid boundary; the response "
            "likely aliases a kernel of support >= grid size",
            RuntimeWarning,
            stacklevel=2,
        )
    return FirKernel(r.out_ports, r.in_ports, taps)


def response_to_csv(r: FrequencyResponse, path) -> None:
    """CSV dump: omega, block-row, block-col, re, im."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "row", "col", "re", "im"])
        for omega, sample in zip(r.grid, r.samples):
            for i in range(sample.shape[0]):
                for j in range(sample.shape[1]):
                    writer.writerow(
                        [
                            format(omega, ".17g"),
                            i,
                            j,
                            format(sample[i, j].real, ".17g"),
                            format(sample[i, j].imag, ".17g"),
                        ]
                    )
