"""Brute-force 2D Schrödinger propagation on the triangle 0 < x < y < L.

The hard wall and the hard-core contact are Dirichlet boundaries: the grid is
square so the contact line x = y passes exactly through nodes, which are
pinned to zero together with x = 0 and y = L.  Time stepping is a Strang
split of Crank-Nicolson half steps per direction; each 1D solve is a Cayley
transform of a Hermitian tridiagonal operator on its row/column segment, so
every step is exactly unitary in the discrete norm and the only errors are
O(dt^2) splitting and O(h^2) dispersion.

Row segments all start at the wall and column segments all end at the top
boundary, which lets one vectorized Thomas elimination sweep handle every
row/column at once; numba kernels are used when available.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianPacket, MassPair, QuadraticFormState

try:
    import numba as _nb
    HAVE_NUMBA = True
except ImportError:          # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

MIN_POINTS_PER_SIGMA = 8
MIN_POINTS_PER_WAVELENGTH = 8
NORM_DRIFT_LIMIT = 1e-8      # per-step unitarity guard

_SNAP_MAGIC = b"QBGRID1\x00"


@dataclass(frozen=True)
class GridSpec:
    """Square grid with n cells per axis on [0, L]; nodes at i L / n."""
    n: int
    length: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("grid too small")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.linspace(0.0, self.length, self.n + 1)
        return x, x.copy()

    def domain_mask(self) -> np.ndarray:
        """Interior triangle nodes: 0 < x_i < y_j < L strictly."""
        idx = np.arange(self.n + 1)
        return (idx[:, None] >= 1) & (idx[:, None] < idx[None, :]) \
            & (idx[None, :] <= self.n - 1)


@dataclass(frozen=True)
class GridField:
    """Complex amplitude on the triangle, zero outside the mask."""
    psi: np.ndarray
    spec: GridSpec
    t: float

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.h**2)


def _masked(psi: np.ndarray, spec: GridSpec) -> np.ndarray:
    out = np.zeros_like(psi)
    m = spec.domain_mask()
    out[m] = psi[m]
    return out


def _normalized_field(psi: np.ndarray, spec: GridSpec, t: float) -> GridField:
    psi = _masked(psi, spec)
    nrm = math.sqrt(float(np.sum(np.abs(psi) ** 2)) * spec.h**2)
    if nrm == 0:
        raise ValueError("field vanishes on the domain")
    return GridField(psi=psi / nrm, spec=spec, t=t)


def init_field(params, spec: GridSpec) -> GridField:
    """Discretized initial state with the sine cutoff enforcing the boundaries.

    Gaussian product times sin(pi x / y) Theta(x) Theta(y - x), normalized on
    the grid.  Fails hard when the grid cannot resolve the packet widths or
    the light particle's wavelength.
    """
    check_resolution(spec, (params.sigma0x, params.sigma0y), params.p_x0)
    return field_from_packets(params.packet_x(), params.packet_y(), spec)


def check_resolution(spec: GridSpec, sigmas, p_max: float) -> None:
    """Raise unless widths and the de Broglie wavelength are resolved."""
    h = spec.h
    for s in sigmas:
        if s / h < MIN_POINTS_PER_SIGMA:
            need = int(math.ceil(spec.length * MIN_POINTS_PER_SIGMA / s))
            raise ValueError(
                f"width {s:g} under-resolved: {s / h:.1f} points per sigma "
                f"< {MIN_POINTS_PER_SIGMA}; need n >= {need}")
    if p_max != 0:
        lam = 2 * math.pi / abs(p_max)
        if lam / h < MIN_POINTS_PER_WAVELENGTH:
            need = int(math.ceil(spec.length * MIN_POINTS_PER_WAVELENGTH / lam))
            raise ValueError(
                f"wavelength {lam:g} under-resolved: {lam / h:.1f} points "
                f"< {MIN_POINTS_PER_WAVELENGTH}; need n >= {need}")


def field_from_packets(px: GaussianPacket, py: GaussianPacket, spec: GridSpec,
                       cutoff: bool = True, t: float = 0.0) -> GridField:
    """Sample a product of packets on the triangle; optional sine cutoff."""
    xs, ys = spec.axes()
    x = xs[:, None]
    y = ys[None, :]
    logpsi = (-(x - px.center) ** 2 / (2 * px.width_sq) + 1j * px.momentum * x
              - (y - py.center) ** 2 / (2 * py.width_sq) + 1j * py.momentum * y)
    psi = np.exp(logpsi - logpsi.real.max())
    if cutoff:
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = psi * np.sin(math.pi * np.where(y > 0, x / np.maximum(y, 1e-300), 0.0))
    return _normalized_field(psi, spec, t)


def field_from_state(state: QuadraticFormState, spec: GridSpec,
                     t: float = 0.0) -> GridField:
    """Sample a quadratic-form state on the triangle (normalized discretely)."""
    xs, ys = spec.axes()
    x = xs[:, None]
    y = ys[None, :]
    logpsi = (state.a_xx * x**2 + state.a_yy * y**2 + state.a_xy * x * y
              + state.b_x * x + state.b_y * y)
    psi = np.exp(logpsi - logpsi.real.max())
    return _normalized_field(psi, spec, t)


# ---------------------------------------------------------------------------
# Crank-Nicolson sweeps
# ---------------------------------------------------------------------------

def _cn_coeffs(gamma: complex, n: int):
    """Shared Thomas elimination coefficients for segments starting at step 1.

    System (1 + 2 i gamma) x_k - i gamma (x_{k-1} + x_{k+1}) = r_k; cprime[m]
    and inv[m] depend only on the distance m from the segment start.
    """
    a = -1j * gamma
    b = 1 + 2j * gamma
    cp = np.zeros(n + 1, dtype=np.complex128)
    inv = np.zeros(n + 1, dtype=np.complex128)
    inv[1] = 1 / b
    cp[1] = a / b
    for m in range(2, n + 1):
        denom = b - a * cp[m - 1]
        inv[m] = 1 / denom
        cp[m] = a * inv[m]
    return cp, inv


def _cn_rhs_x(psi: np.ndarray, gamma: complex) -> np.ndarray:
    r = (1 - 2j * gamma) * psi
    r[1:-1, :] += 1j * gamma * (psi[:-2, :] + psi[2:, :])
    return r


def _cn_rhs_y(psi: np.ndarray, gamma: complex) -> np.ndarray:
    r = (1 - 2j * gamma) * psi
    r[:, 1:-1] += 1j * gamma * (psi[:, :-2] + psi[:, 2:])
    return r


def _sweep_x_numpy(psi, gamma, cp, inv, active):
    """CN solve along x for every row segment [1, j-1] at once."""
    n = psi.shape[0] - 1
    r = _cn_rhs_x(psi, gamma)
    a = -1j * gamma
    d = np.zeros_like(psi)
    for i in range(1, n):
        d[i, :] = (r[i, :] - a * d[i - 1, :]) * inv[i]
    out = np.zeros_like(psi)
    for i in range(n - 1, 0, -1):
        out[i, :] = (d[i, :] - cp[i] * out[i + 1, :]) * active[i, :]
    return out

def _sweep_y_numpy(psi, gamma, cp, inv, active):
    """CN solve along y for every column segment [i+1, n-1] at once.

    Elimination runs downward from the shared top boundary; the varying wall
    end is handled by masking during the upward substitution.
    """
    n = psi.shape[0] - 1
    r = _cn_rhs_y(psi, gamma)
    a = -1j * gamma
    d = np.zeros_like(psi)
    for j in range(n - 1, 0, -1):
        d[:, j] = (r[:, j] - a * d[:, j + 1]) * inv[n - j]
    out = np.zeros_like(psi)
    for j in range(1, n):
        out[:, j] = (d[:, j] - cp[n - j] * out[:, j - 1]) * active[:, j]
    return out


if HAVE_NUMBA:
    @_nb.njit(cache=True, parallel=True)
    def _sweep_x_numba(psi, gamma, cp, inv):    # pragma: no cover - jitted
        n = psi.shape[0] - 1
        a = -1j * gamma
        out = np.zeros_like(psi)
        for j in _nb.prange(2, n):
            hi = j - 1                      # segment [1, hi]
            d = np.zeros(hi + 1, dtype=np.complex128)
            for i in range(1, hi + 1):
                r = (1 - 2j * gamma) * psi[i, j] + 1j * gamma * (psi[i - 1, j] + psi[i + 1, j])
                d[i] = (r - a * d[i - 1]) * inv[i]
            prev = 0.0 + 0.0j
            for i in range(hi, 0, -1):
                prev = d[i] - cp[i] * prev
                out[i, j] = prev
        return out

    @_nb.njit(cache=True, parallel=True)
    def _sweep_y_numba(psi, gamma, cp, inv):    # pragma: no cover - jitted
        n = psi.shape[0] - 1
        a = -1j * gamma
        out = np.zeros_like(psi)
        for i in _nb.prange(1, n - 1):
            lo = i + 1                      # segment [lo, n-1]
            d = np.zeros(n + 1, dtype=np.complex128)
            for j in range(n - 1, lo - 1, -1):
                r = (1 - 2j * gamma) * psi[i, j] + 1j * gamma * (psi[i, j - 1] + psi[i, j + 1])
                d[j] = (r - a * d[j + 1]) * inv[n - j]
            prev = 0.0 + 0.0j
            for j in range(lo, n):
                prev = d[j] - cp[n - j] * prev
                out[i, j] = prev
        return out


class _Stepper:
    """Precomputed sweep coefficients for one (spec, masses, dt) combination."""

    def __init__(self, spec: GridSpec, masses: MassPair, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.spec = spec
        self.dt = dt
        h = spec.h
        self.gx = dt / (8 * masses.m_x * h * h)   # half step in x
        self.gy = dt / (4 * masses.m_y * h * h)   # full step in y
        self.cpx, self.invx = _cn_coeffs(self.gx, spec.n)
        self.cpy, self.invy = _cn_coeffs(self.gy, spec.n)
        self.active = spec.domain_mask()

    def step(self, psi: np.ndarray) -> np.ndarray:
        if HAVE_NUMBA:
            psi = _sweep_x_numba(psi, self.gx, self.cpx, self.invx)
            psi = _sweep_y_numba(psi, self.gy, self.cpy, self.invy)
            psi = _sweep_x_numba(psi, self.gx, self.cpx, self.invx)
        else:
            psi = _sweep_x_numpy(psi, self.gx, self.cpx, self.invx, self.active)
            psi = _sweep_y_numpy(psi, self.gy, self.cpy, self.invy, self.active)
            psi = _sweep_x_numpy(psi, self.gx, self.cpx, self.invx, self.active)
        return psi


def evolve(field: GridField, masses: MassPair, dt: float, steps: int,
           check_every: int = 25) -> GridField:
    """Propagate the field by steps * dt; aborts if unitarity ever degrades.

    Accuracy is second order in dt and h; choose dt so the largest kinetic
    phase per step stays small (dt <~ m_x h^2 is comfortable).
    """
    stepper = _Stepper(field.spec, masses, dt)
    psi = field.psi.copy()
    norm0 = float(np.sum(np.abs(psi) ** 2))
    last, last_k = norm0, 0
    for k in range(steps):
        psi = stepper.step(psi)
        if (k + 1) % check_every == 0 or k == steps - 1:
            now = float(np.sum(np.abs(psi) ** 2))
            drift = abs(now - last) / (norm0 * (k + 1 - last_k))
            if drift > NORM_DRIFT_LIMIT:
                raise RuntimeError(
                    f"norm drift {drift:.2e} per step exceeds "
                    f"{NORM_DRIFT_LIMIT:.0e} at step {k + 1}: unstable configuration")
            last, last_k = now, k + 1
    return GridField(psi=psi, spec=field.spec, t=field.t + steps * dt)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def schmidt_purity(field: GridField) -> float:
    """Sum s^4 / (sum s^2)^2 over the singular values of the amplitude matrix."""
    s = np.linalg.svd(field.psi, compute_uv=False)
    s2 = s * s
    return float(np.sum(s2 * s2) / np.sum(s2) ** 2)


def schmidt_entropy(field: GridField) -> float:
    """Entropy of the normalized Schmidt spectrum."""
    s = np.linalg.svd(field.psi, compute_uv=False)
    lam = s * s
    lam = lam / lam.sum()
    lam = lam[lam > 0]          # after normalizing: drop underflowed weights
    return float(-np.sum(lam * np.log(lam)))


def overlap(field: GridField, state: QuadraticFormState) -> complex:
    """Discrete inner product with a quadratic-form state sampled on the grid."""
    other = field_from_state(state, field.spec, t=field.t)
    return overlap_fields(field, other)


def overlap_fields(f1: GridField, f2: GridField) -> complex:
    n1 = math.sqrt(float(np.sum(np.abs(f1.psi) ** 2)))
    n2 = math.sqrt(float(np.sum(np.abs(f2.psi) ** 2)))
    return complex(np.sum(np.conj(f1.psi) * f2.psi) / (n1 * n2))


def marginals(field: GridField) -> tuple[np.ndarray, np.ndarray]:
    """Position densities over x and over y; each integrates to one."""
    h = field.h
    dens = np.abs(field.psi) ** 2
    total = dens.sum() * h * h
    return dens.sum(axis=1) * h / total, dens.sum(axis=0) * h / total


def moments(field: GridField) -> dict:
    """Means and variances of the position densities."""
    xs, ys = field.spec.axes()
    px, py = marginals(field)
    h = field.h
    mx = float(np.sum(xs * px) * h)
    my = float(np.sum(ys * py) * h)
    vx = float(np.sum((xs - mx) ** 2 * px) * h)
    vy = float(np.sum((ys - my) ** 2 * py) * h)
    return {"mean_x": mx, "mean_y": my, "var_x": vx, "var_y": vy}


def energy(field: GridField, masses: MassPair) -> float:
    """Kinetic expectation value with one-sided zero boundaries."""
    psi = field.psi
    h = field.h
    dx = (psi[1:, :] - psi[:-1, :]) / h
    dy = (psi[:, 1:] - psi[:, :-1]) / h
    ex = np.sum(np.abs(dx) ** 2) / (2 * masses.m_x)
    ey = np.sum(np.abs(dy) ** 2) / (2 * masses.m_y)
    return float((ex + ey) * h * h / field.norm_sq)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def save_snapshot(field: GridField, path) -> None:
    """Binary snapshot: magic, n_x, n_y (int64 LE), dx, dy, t (float64 LE),
    then row-major interleaved re/im float64 pairs."""
    n = field.spec.n + 1
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<qqddd", n, n, field.h, field.h, field.t))
        inter = np.empty((n, n, 2))
        inter[:, :, 0] = field.psi.real
        inter[:, :, 1] = field.psi.imag
        fh.write(inter.astype("<f8").tobytes(order="C"))


def load_snapshot(path) -> GridField:
    with open(path, "rb") as fh:
        magic = fh.read(len(_SNAP_MAGIC))
        if magic != _SNAP_MAGIC:
            raise ValueError("not a field snapshot")
        nx, ny, dx, dy, t = struct.unpack("<qqddd", fh.read(40))
        if nx != ny:
            raise ValueError("snapshot grid is not square")
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(nx, ny, 2)
    spec = GridSpec(n=nx - 1, length=dx * (nx - 1))
    psi = raw[:, :, 0] + 1j * raw[:, :, 1]
    return GridField(psi=psi, spec=spec, t=t)


def write_marginals_csv(field: GridField, path) -> None:
    xs, _ = field.spec.axes()
    px, py = marginals(field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coordinate", "density_x", "density_y"])
        for i in range(len(xs)):
            w.writerow([f"{xs[i]:.17g}", f"{px[i]:.17g}", f"{py[i]:.17g}"])
