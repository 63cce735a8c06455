"""Grid oracle for magnetic Weyl quantization (d = 1 or 2).

Positions live on a periodic microscopic grid u = U h, U in [-N/2, N/2),
h = 2L/N; symbols are evaluated at macroscopic points x = eps * u.  The
kernel of Op^A_{eps,lam}(f) is

    K(u, v) = (2 pi)^-d int d eta e^{-i (v - u) eta} f(eps (u + v)/2, eta)
              * exp(-i lam Gamma^A_eps([u, v])),

with Gamma^A_eps([u, v]) = Gamma^A([eps u, eps v]) / eps.  On the torus the
offset r = v - u is taken as the minimal image in [-L, L) and the centre
u + r/2 is wrapped back into the box, so (u, v) and (v, u) share a centre
and the circulation runs over the segment symmetric about it.  The eta integral becomes an N-point DFT on the dual
grid eta_J = J pi / L, which makes quantize / wigner_inverse an exact pair
for symbols that are negligible beyond |xi| = pi / (2h).

The inverse transform at integer centres uses even offsets y = 2 S h only,
S in (-N/4, N/4], so no half-index interpolation is required; the symbol
comes back on N/2 momenta per axis with spacing pi / L.
"""
from __future__ import annotations

import configparser
import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .magnetics import (MagneticField, VectorPotential, add_gradient, circulation_grid,
                        gauss_legendre, scaled_flux)
from .symcore import phase_space, to_numpy

__all__ = [
    "Grid", "GridKernel", "GridSymbol", "OracleConfig", "GaugeReport", "LambdaFit",
    "BandLimitWarning", "NumericsError", "IllConditionedFitError",
    "symbol_function", "sample_symbol", "quantize", "compose", "wigner_inverse",
    "moyal_oracle", "gauge_covariance_check", "wigner_transform", "phase_space_pairing",
    "btilde", "interior_indices", "minsub_kernel_difference", "lambda_series_fit", "load_config", "fit_slope", "central_mask",
]


class NumericsError(ValueError):
    pass


class IllConditionedFitError(NumericsError):
    pass


class BandLimitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    points: int
    extent: float

    def __post_init__(self):
        n = self.points
        if n < 8 or n & (n - 1):
            raise NumericsError("points per axis must be a power of two and at least 8")
        if self.dim not in (1, 2):
            raise NumericsError("the grid oracle supports d = 1 and d = 2")
        if self.extent <= 0:
            raise NumericsError("extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def dual_spacing(self) -> float:
        return np.pi / self.extent

    @property
    def volume(self) -> float:
        return self.h ** self.dim

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.points) - self.points // 2

    @property
    def positions(self) -> np.ndarray:
        return self.index * self.h

    @property
    def momenta(self) -> np.ndarray:
        """Dual grid of the kernel transform, N points in [-pi/h, pi/h)."""
        return self.index * self.dual_spacing

    @property
    def wigner_momenta(self) -> np.ndarray:
        """Momenta returned by the inverse transform, N/2 points in [-pi/2h, pi/2h)."""
        n = self.points // 2
        return (np.arange(n) - n // 2) * self.dual_spacing

    @property
    def size(self) -> int:
        return self.points ** self.dim

    def position_mesh(self) -> np.ndarray:
        """(N^d, d) array of grid points in row-major order."""
        axes = np.meshgrid(*([self.positions] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)


@dataclass
class GridKernel:
    grid: Grid
    K: np.ndarray

    def __matmul__(self, other: "GridKernel") -> "GridKernel":
        return compose(self, other)

    def adjoint(self) -> "GridKernel":
        return GridKernel(self.grid, self.K.conj().T)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.grid.volume * (self.K @ np.asarray(psi).reshape(-1))

    def norm(self) -> float:
        """Operator norm of the discretized operator."""
        return self.grid.volume * np.linalg.norm(self.K, 2)


@dataclass
class GridSymbol:
    grid: Grid
    values: np.ndarray  # shape (N,)*d + (M,)*d
    positions: np.ndarray  # macroscopic positions per axis
    momenta: np.ndarray

    def __sub__(self, other: "GridSymbol") -> "GridSymbol":
        return GridSymbol(self.grid, self.values - other.values, self.positions, self.momenta)

    def max_abs(self, mask: np.ndarray | None = None) -> float:
        v = np.abs(self.values)
        return float(v[mask].max() if mask is not None else v.max())

    def to_csv(self, path) -> None:
        """x-major order, header row naming the axes."""
        d = self.grid.dim
        header = [f"x{i}" for i in range(1, d + 1)] + [f"xi{i}" for i in range(1, d + 1)] + ["re", "im"]
        grids = np.meshgrid(*([self.positions] * d + [self.momenta] * d), indexing="ij")
        flat = [g.ravel() for g in grids]
        vals = self.values.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*flat, vals.real, vals.imag):
                w.writerow([repr(float(v)) for v in row])

    def to_dict(self) -> dict:
        return {
            "dim": self.grid.dim,
            "positions": self.positions.tolist(),
            "momenta": self.momenta.tolist(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
        }


# ---------------------------------------------------------------------------
# symbols


def symbol_function(f, dim: int) -> Callable:
    """Vectorized f(x1, .., xd, xi1, .., xid) from an Expr or a callable."""
    if callable(f) and not isinstance(f, sp.Basic):
        return f
    space = phase_space(dim)
    return to_numpy(sp.sympify(f), space.x + space.xi)


def sample_symbol(f, grid: Grid, eps: float, momenta: np.ndarray | None = None) -> GridSymbol:
    """f at (eps * u, xi) on the grid; default momenta are the Wigner momenta."""
    fn = symbol_function(f, grid.dim)
    d = grid.dim
    mom = grid.wigner_momenta if momenta is None else np.asarray(momenta)
    axes = np.meshgrid(*([eps * grid.positions] * d + [mom] * d), indexing="ij", sparse=True)
    vals = np.asarray(fn(*axes), dtype=complex)
    shape = (grid.points,) * d + (len(mom),) * d
    return GridSymbol(grid, np.broadcast_to(vals, shape).copy(), eps * grid.positions, mom)


def central_mask(sym: GridSymbol, fraction: float = 0.5, radius: float | None = None) -> np.ndarray:
    """Positions with |x| < radius (default: the central half, |u| < L/2).

    Inside the central half the offsets of the inverse transform never wrap
    around the torus, so no periodic image of the symbol leaks in.
    """
    d = sym.grid.dim
    pos = sym.positions
    if radius is None:
        radius = fraction * np.abs(pos).max()
    inside = np.abs(pos) < radius - 1e-12 * radius
    masks = np.meshgrid(*([inside] * d), indexing="ij")
    m = np.logical_and.reduce(masks) if d > 1 else masks[0]
    return np.broadcast_to(m.reshape(m.shape + (1,) * d), sym.values.shape)


# ---------------------------------------------------------------------------
# kernels


def _axis_pairs(N: int):
    """Minimal-image offsets R and doubled centre indices C for all (U, V).

    C is wrapped into [-N, N) so that (U, V) and (V, U) share a centre.
    """
    U = np.arange(N)[:, None] - N // 2
    V = np.arange(N)[None, :] - N // 2
    R = (V - U + N // 2) % N - N // 2
    C = (2 * U + R + N) % (2 * N) - N
    return R, C


def _sampler(f, grid: Grid, eps: float):
    """Return g(C_list, eta_list) = f(eps * C h / 2, eta) with broadcasting."""
    h = grid.h
    if isinstance(f, GridSymbol):
        return _grid_symbol_sampler(f, grid, eps)
    fn = symbol_function(f, grid.dim)

    def sample(centres, etas):
        args = [eps * c * h / 2 for c in centres] + list(etas)
        return fn(*args)

    return sample


def _grid_symbol_sampler(sym: GridSymbol, grid: Grid, eps: float):
    N, d = grid.points, grid.dim
    if sym.values.shape != (N,) * d + (N,) * d or not np.allclose(sym.momenta, grid.momenta):
        raise NumericsError("grid symbols used as input must be sampled on the full dual grid")
    # trigonometric interpolation to half-integer positions (periodic extension)
    vals = sym.values
    for ax in range(d):
        spec = np.fft.fft(vals, axis=ax)
        pad_shape = list(spec.shape)
        pad_shape[ax] = 2 * N
        padded = np.zeros(pad_shape, dtype=complex)
        lo = [slice(None)] * spec.ndim
        hi = [slice(None)] * spec.ndim
        lo[ax] = slice(0, N // 2)
        hi[ax] = slice(N + N // 2, 2 * N)
        src_lo = [slice(None)] * spec.ndim
        src_hi = [slice(None)] * spec.ndim
        src_lo[ax] = slice(0, N // 2)
        src_hi[ax] = slice(N // 2, N)
        padded[tuple(lo)] = spec[tuple(src_lo)]
        padded[tuple(hi)] = spec[tuple(src_hi)]
        vals = 2 * np.fft.ifft(padded, axis=ax)
    eta_index = {round(v / grid.dual_spacing): i for i, v in enumerate(sym.momenta)}

    def sample(centres, etas):
        # centre index C (doubled) sits at upsampled index C + N  (position -N/2 is index 0)
        idx = [np.mod(np.asarray(c) + N, 2 * N).astype(int) for c in centres]
        eidx = [np.vectorize(lambda e: eta_index[round(e / grid.dual_spacing)])(np.asarray(e))
                for e in etas]
        return vals[tuple(idx + eidx)]

    return sample


def _base_kernel(f, grid: Grid, eps: float, warn: bool = True) -> np.ndarray:
    """Kernel of the non-magnetic part, shape (N,)*2d ordered (U.., V..).

    Pairs half a period apart use the image centred on their row; this is the
    one wigner_inverse reads back, at the price of Hermiticity on those pairs.
    """
    N, d, h = grid.points, grid.dim, grid.h
    R, C = _axis_pairs(N)
    cmin = -N
    ncent = 2 * N
    centres = np.arange(ncent) + cmin
    eta = grid.momenta
    sample = _sampler(f, grid, eps)
    norm = 1.0 / (N * h) ** d
    edge_max, peak = 0.0, 0.0
    if d == 1:
        vals = np.asarray(sample([centres[:, None]], [eta[None, :]]), dtype=complex)
        vals = np.broadcast_to(vals, (ncent, N))
        edge_max = np.abs(vals[:, 0]).max()
        peak = np.abs(vals).max()
        F = np.fft.fft(np.fft.ifftshift(vals, axes=1), axis=1) * norm
        K = F[C - cmin, R % N]
    else:
        K = np.zeros((N, N, N, N), dtype=complex)
        I2, J2 = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        C2 = C - cmin
        R2 = R % N
        groups: dict = {}
        for iu in range(N):
            for iv in range(N):
                groups.setdefault(int(C[iu, iv]), []).append((iu, iv, int(R[iu, iv]) % N))
        for c1 in centres:
            members = groups.get(int(c1))
            if not members:
                continue
            vals = sample([np.full((1, 1, 1), c1), centres[:, None, None]],
                          [eta[None, :, None], eta[None, None, :]])
            vals = np.broadcast_to(np.asarray(vals, dtype=complex), (ncent, N, N))
            edge_max = max(edge_max, np.abs(vals[:, 0, :]).max(), np.abs(vals[:, :, 0]).max())
            peak = max(peak, np.abs(vals).max())
            F = np.fft.fft2(np.fft.ifftshift(vals, axes=(1, 2)), axes=(1, 2)) * norm
            m = np.array(members)
            iu1, iv1, r1 = m[:, 0], m[:, 1], m[:, 2]
            block = F[C2[None, :, :], r1[:, None, None], R2[None, :, :]]
            K[iu1[:, None, None], I2[None], iv1[:, None, None], J2[None]] = block
    if warn and peak > 0 and edge_max > 1e-6 * peak:
        warnings.warn(f"symbol is not band-limited on the dual grid "
                      f"(edge/peak = {edge_max / peak:.2e})", BandLimitWarning, stacklevel=3)
    return K


def _phase_matrix(A: VectorPotential, grid: Grid, eps: float) -> np.ndarray:
    """Gamma^A_eps of the segment [c - r/2, c + r/2] of every pair, shape (N,)*2d.

    Away from the seam this is [u, v]; wrapped pairs use the segment around
    their shared centre so that swapping u and v only reverses it.
    """
    N, d, h = grid.points, grid.dim, grid.h
    R, C = _axis_pairs(N)
    if d == 1:
        p, q = eps * (C - R) * h / 2, eps * (C + R) * h / 2
        return np.asarray(circulation_grid(A, p[..., None], q[..., None])) / eps
    out = np.empty((N, N, N, N))
    for iu1 in range(N):
        # axes: (U2, V1, V2)
        cen = np.stack(np.broadcast_arrays(C[iu1][None, :, None], C[:, None, :]), -1)
        off = np.stack(np.broadcast_arrays(R[iu1][None, :, None], R[:, None, :]), -1)
        out[iu1] = circulation_grid(A, eps * (cen - off) * h / 2, eps * (cen + off) * h / 2) / eps
    return out


def quantize(f, A: VectorPotential | None, eps: float, lam: float, grid: Grid,
             warn: bool = True) -> GridKernel:
    """Kernel matrix of Op^A_{eps,lam}(f) on the grid."""
    K = _base_kernel(f, grid, eps, warn)
    if A is not None and lam != 0:
        K = K * np.exp(-1j * lam * _phase_matrix(A, grid, eps))
    n = grid.size
    return GridKernel(grid, K.reshape(n, n))


def compose(K1: GridKernel, K2: GridKernel) -> GridKernel:
    if K1.grid != K2.grid:
        raise NumericsError("kernels live on different grids")
    return GridKernel(K1.grid, K1.grid.volume * (K1.K @ K2.K))


def _wigner_gather(K: GridKernel, symmetric: bool = False):
    """G[U.., S..] = K(U + S, U - S) for S in (-N/4, N/4] (or [-N/4, N/4])."""
    grid = K.grid
    N, d = grid.points, grid.dim
    S = np.arange(-N // 4 + (0 if symmetric else 1), N // 4 + 1)
    K4 = K.K.reshape((N,) * (2 * d))
    iu = np.arange(N)
    if d == 1:
        G = K4[(iu[:, None] + S[None]) % N, (iu[:, None] - S[None]) % N]
    else:
        a1 = iu[:, None, None, None]
        a2 = iu[None, :, None, None]
        s1 = S[None, None, :, None]
        s2 = S[None, None, None, :]
        G = K4[(a1 + s1) % N, (a2 + s2) % N, (a1 - s1) % N, (a2 - s2) % N]
    return G, S


def _wigner_phase(A, grid: Grid, eps: float, S: np.ndarray, sign: int = 1) -> np.ndarray:
    """Gamma^A_eps([c - y/2, c + y/2]) with c = U h, y = 2 S h (sign=+1)."""
    N, d, h = grid.points, grid.dim, grid.h
    u = grid.positions
    if d == 1:
        c = u[:, None]
        off = (S * h)[None, :]
        p = (eps * (c - sign * off))[..., None]
        q = (eps * (c + sign * off))[..., None]
    else:
        c1 = u[:, None, None, None]
        c2 = u[None, :, None, None]
        o1 = (S * h)[None, None, :, None]
        o2 = (S * h)[None, None, None, :]
        shape = (N, N, len(S), len(S))
        p = np.stack([np.broadcast_to(eps * (c1 - sign * o1), shape),
                      np.broadcast_to(eps * (c2 - sign * o2), shape)], axis=-1)
        q = np.stack([np.broadcast_to(eps * (c1 + sign * o1), shape),
                      np.broadcast_to(eps * (c2 + sign * o2), shape)], axis=-1)
    return np.asarray(circulation_grid(A, p, q)) / eps


def wigner_inverse(K: GridKernel, A: VectorPotential | None, eps: float, lam: float) -> GridSymbol:
    """Symbol f(eps c, xi) of a kernel, on integer centres and the Wigner momenta."""
    grid = K.grid
    N, d, h = grid.points, grid.dim, grid.h
    G, S = _wigner_gather(K)
    if A is not None and lam != 0:
        G = G * np.exp(-1j * lam * _wigner_phase(A, grid, eps, S))
    axes = tuple(range(d, 2 * d))
    # S sits at DFT index S mod N/2; output index M mod N/2, then centred
    G = np.roll(G, shift=[int(S[0]) % (N // 2)] * d, axis=axes)
    F = np.fft.fftn(G, axes=axes) * (2 * h) ** d
    F = np.fft.fftshift(F, axes=axes)
    return GridSymbol(grid, F, eps * grid.positions, grid.wigner_momenta)


def moyal_oracle(f, g, A: VectorPotential | None, eps: float, lam: float, grid: Grid,
                 warn: bool = True) -> GridSymbol:
    """Numerically exact magnetic Moyal product on the grid."""
    Kf = quantize(f, A, eps, lam, grid, warn)
    Kg = quantize(g, A, eps, lam, grid, warn)
    return wigner_inverse(compose(Kf, Kg), A, eps, lam)


# ---------------------------------------------------------------------------
# checks


@dataclass
class GaugeReport:
    difference: float
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.difference < self.tolerance


def interior_indices(grid: Grid) -> np.ndarray:
    """Flat indices of grid points with every |u_i| < L/2."""
    inside = np.all(np.abs(grid.position_mesh()) < grid.extent / 2, axis=1)
    return np.flatnonzero(inside)


def gauge_covariance_check(f, A: VectorPotential, chi, eps: float, lam: float, grid: Grid,
                           tolerance: float = 1e-8, interior: bool = True) -> GaugeReport:
    """Relative spectral-norm distance between Op^{A + eps grad chi}(f) and
    e^{i lam chi(eps Q)} Op^A(f) e^{-i lam chi(eps Q)}.

    Pairs straddling the torus seam use a wrapped offset for which the phase
    identity does not hold, so by default only the interior block is compared.
    """
    K = quantize(f, A, eps, lam, grid, warn=False).K
    A2 = add_gradient(A, chi, eps)
    K2 = quantize(f, A2, eps, lam, grid, warn=False).K
    chi_fn = to_numpy(sp.sympify(chi), phase_space(grid.dim).x)
    pts = eps * grid.position_mesh()
    phase = np.exp(1j * lam * np.broadcast_to(chi_fn(*pts.T), (grid.size,)))
    conj = phase[:, None] * K * phase.conj()[None, :]
    if interior:
        idx = interior_indices(grid)
        K2, conj = K2[np.ix_(idx, idx)], conj[np.ix_(idx, idx)]
    top = np.linalg.norm(K2 - conj, 2)
    bottom = np.linalg.norm(K2, 2)
    return GaugeReport(float(top / bottom) if bottom else float(top), tolerance)


def minsub_kernel_difference(h, A: VectorPotential, eps: float, lam: float, grid: Grid,
                             interior: bool = True) -> float:
    """Operator norm of Op_eps(h o theta^{lam A}) - Op^A_{eps,lam}(h) on the grid."""
    space = phase_space(grid.dim)
    hs = sp.sympify(h)
    sub = {k: k - lam * a for k, a in zip(space.xi, A.components)}
    K1 = quantize(hs.xreplace(sub), None, eps, 0.0, grid, warn=False).K
    K2 = quantize(hs, A, eps, lam, grid, warn=False).K
    D = K1 - K2
    if interior:
        idx = interior_indices(grid)
        D = D[np.ix_(idx, idx)]
    return float(grid.volume * np.linalg.norm(D, 2))


def wigner_transform(phi: np.ndarray, psi: np.ndarray, A: VectorPotential | None, eps: float,
                     lam: float, grid: Grid) -> GridSymbol:
    """W(phi, psi)(x, xi) = eps^-d int dy e^{i y xi} e^{-i lam Gamma_eps([c+y/2, c-y/2])}
    conj(phi)(c + y/2) psi(c - y/2), c = x / eps."""
    N, d, h = grid.points, grid.dim, grid.h
    phi = np.asarray(phi).reshape((N,) * d)
    psi = np.asarray(psi).reshape((N,) * d)
    rho = np.conj(phi).reshape(-1)[:, None] * psi.reshape(-1)[None, :]
    G, S = _wigner_gather(GridKernel(grid, rho), symmetric=True)
    if A is not None and lam != 0:
        G = G * np.exp(-1j * lam * _wigner_phase(A, grid, eps, S, sign=-1))
    xi = grid.wigner_momenta
    # trapezoid weights: the offsets +-N/4 alias onto each other
    E = np.exp(1j * 2 * h * np.outer(S, xi))
    E[0] *= 0.5
    E[-1] *= 0.5
    if d == 1:
        out = G @ E
    else:
        out = np.einsum("abst,sm,tn->abmn", G, E, E, optimize=True)
    return GridSymbol(grid, (2 * h) ** d * out / eps ** d, eps * grid.positions, xi)


def phase_space_pairing(f_values: np.ndarray, W: GridSymbol, eps: float) -> complex:
    """(2 pi)^-d int dX f(X) W(X) with the grid's phase-space volume element."""
    d = W.grid.dim
    dx = eps * W.grid.h
    dxi = W.grid.dual_spacing
    # integer centres sample every second point of the offset lattice: weight 2^d
    return complex((2 * np.pi) ** (-d) * (dx * dxi) ** d * np.sum(f_values * W.values))


def btilde(B: MagneticField, x, y, z, eps: float, nodes: int = 32) -> np.ndarray:
    """B~ with -eps B~_lj y_l z_j = gamma_eps(x, y, z).

    Tensor Gauss-Legendre on t in [-1/2, 1/2], s in [0, 1] of
    s [B(x + eps s (t y - z/2)) + B(x + eps s (y/2 + t z))] / 2; the overall
    sign follows the defining relation with gamma_eps oriented as in
    ``scaled_flux``.
    """
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    s, ws = gauss_legendre(nodes)
    t, wt = gauss_legendre(nodes)
    t = t - 0.5
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt) * S
    p1 = x + eps * S[..., None] * (T[..., None] * y - z / 2)
    p2 = x + eps * S[..., None] * (y / 2 + T[..., None] * z)
    val = 0.5 * np.einsum("st,stlj->lj", W, B.numeric(p1) + B.numeric(p2))
    return -val


@dataclass
class LambdaFit:
    lams: np.ndarray
    coefficients: np.ndarray  # (degree + 1,) + symbol shape, in powers of lambda
    condition: float
    symbol: GridSymbol

    def coefficient(self, k: int) -> GridSymbol:
        s = self.symbol
        return GridSymbol(s.grid, self.coefficients[k], s.positions, s.momenta)


def lambda_series_fit(f, g, A: VectorPotential, eps: float, lams: Sequence[float], grid: Grid,
                      degree: int | None = None, max_condition: float = 1e8) -> LambdaFit:
    """Least-squares polynomial fit in lambda of the oracle at fixed eps."""
    lams = np.asarray(sorted(set(float(v) for v in lams)))
    if np.any(lams <= 0) or np.any(lams > 0.3 + 1e-12):
        raise NumericsError("lambda samples must lie in (0, 0.3]")
    degree = len(lams) - 2 if degree is None else degree
    if len(lams) < degree + 2:
        raise NumericsError(f"need at least {degree + 2} distinct lambda samples")
    scale = lams.max()
    Vm = np.vander(lams / scale, degree + 1, increasing=True)
    cond = float(np.linalg.cond(Vm))
    if cond > max_condition:
        raise IllConditionedFitError(
            f"Vandermonde condition {cond:.2e} exceeds {max_condition:.0e}; "
            "use fewer orders or wider lambda spacing")
    Kf0 = _base_kernel(f, grid, eps)
    Kg0 = _base_kernel(g, grid, eps)
    Gam = _phase_matrix(A, grid, eps)
    n = grid.size
    samples = []
    template = None
    for lam in lams:
        ph = np.exp(-1j * lam * Gam)
        Kf = GridKernel(grid, (Kf0 * ph).reshape(n, n))
        Kg = GridKernel(grid, (Kg0 * ph).reshape(n, n))
        sym = wigner_inverse(compose(Kf, Kg), A, eps, lam)
        samples.append(sym.values)
        template = sym
    Y = np.stack(samples).reshape(len(lams), -1)
    coef, *_ = np.linalg.lstsq(Vm, Y, rcond=None)
    coef = coef / (scale ** np.arange(degree + 1))[:, None]
    coef = coef.reshape((degree + 1,) + template.values.shape)
    return LambdaFit(lams, coef, cond, template)


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


# ---------------------------------------------------------------------------
# configuration


@dataclass
class OracleConfig:
    dim: int = 2
    points: int = 32
    extent: float = 6.0
    eps: float = 0.5
    lam: float = 0.3
    tol_roundtrip: float = 1e-8
    tol_compose: float = 1e-9
    tol_slope: float = 0.3
    tol_flux: float = 1e-8

    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.points, self.extent)


_CONFIG_TYPES = {"dim": int, "points": int, "extent": float, "eps": float, "lambda": float,
                 "tol_roundtrip": float, "tol_compose": float, "tol_slope": float,
                 "tol_flux": float}


def update_config(cfg: OracleConfig, items) -> OracleConfig:
    """Apply (key, value) pairs; values may be strings or numbers."""
    for key, value in items:
        key = key.strip().lower()
        if key not in _CONFIG_TYPES:
            raise NumericsError(f"unknown configuration key {key!r}")
        attr = "lam" if key == "lambda" else key
        conv = _CONFIG_TYPES[key]
        setattr(cfg, attr, conv(float(value)) if conv is int and not isinstance(value, str)
                else conv(value))
    return cfg


def load_config(path) -> OracleConfig:
    """Read key = value pairs (optionally under an [oracle] section)."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[oracle]\n" + text
    parser.read_string(text)
    section = parser["oracle"] if parser.has_section("oracle") else parser[parser.sections()[0]]
    return update_config(OracleConfig(), section.items())
