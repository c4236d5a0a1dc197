"""Truncated Fock-space white noise calculus over n Gaussian modes.

Coefficient dictionary
----------------------
A functional of n independent standard Gaussians xi_1..xi_n is stored by its
coefficients in the *unnormalized* product Hermite (Wick monomial) basis,

    Phi(xi) = sum_{|alpha| <= M} a_alpha  prod_i He_{alpha_i}(xi_i),

He_m the probabilists' Hermite polynomials (He_0=1, He_1=x, He_2=x^2-1, ...).
This dictionary makes the three central structures elementary:

* squared L2(Gaussian) norm:  ||Phi||_0^2 = sum_alpha alpha! |a_alpha|^2;
* S-transform = polynomial evaluation:  S Phi(zeta) = sum_alpha a_alpha zeta^alpha,
  because pairing against the exponential vector phi_zeta (whose coefficients
  are zeta^alpha / alpha!) under the bilinear duality
  <<Phi, Psi>> = sum alpha! a_alpha b_alpha cancels the factorials;
* Wick product = coefficient convolution:  (Phi : Psi)_gamma =
  sum_{alpha+beta=gamma} a_alpha b_beta, the unique product with
  S(Phi : Psi) = (S Phi)(S Psi).

Exponential vectors satisfy <<phi_zeta, phi_eta>> = e^{<zeta,eta>} (bilinear
pairing, no conjugation; the Hilbert inner product is used only for norms).
Annihilation/creation act as the usual lowering/raising maps and satisfy the
CCR on degrees strictly below the truncation order. Second quantization
Gamma(B) is polynomial substitution zeta -> B^T zeta, which is
degree-homogeneous and hence exact under truncation.

Conjugation convention: powers like |psi|^2 psi are not Wick polynomials in
psi alone. We use the doubled-variable convention, treating psi and its
coefficient-conjugate psi* as independent Wick arguments, so
:|psi|^2 psi: = psi : psi : psi*. For real test vectors zeta this gives
S(:J(psi):)(zeta) = J(S psi(zeta)) exactly (modulo truncation).

The weighted norms |zeta|_p = |A^p zeta| use the reference weights w_i > 1
(default w_i = i + 1, whose inverse is Hilbert-Schmidt in the infinite
limit), and the graded functional norms are

    ||Phi||_{p,beta}^2 = sum_alpha (|alpha|!)^{+-beta} alpha! |a_alpha|^2
                          prod_i w_i^{2 p alpha_i},

with exponent +beta for p >= 0 and -beta for p < 0 (the dual scale).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import combinations_with_replacement
from math import factorial

import numpy as np

from .grids import State
from .models import Model


def _multi_indices(n_modes: int, max_degree: int) -> np.ndarray:
    """All multi-indices with |alpha| <= M in graded order."""
    rows = []
    for deg in range(max_degree + 1):
        block = []
        for picks in combinations_with_replacement(range(n_modes), deg):
            alpha = [0] * n_modes
            for i in picks:
                alpha[i] += 1
            block.append(tuple(alpha))
        rows.extend(sorted(block))
    return np.array(rows, dtype=int).reshape(len(rows), n_modes)


@dataclass
class ChaosSpace:
    """Truncation parameters plus cached combinatorial tables."""

    n_modes: int
    max_degree: int
    mode_weights: np.ndarray | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.mode_weights is None:
            self.mode_weights = np.arange(2, self.n_modes + 2, dtype=float)
        self.mode_weights = np.asarray(self.mode_weights, dtype=float)
        if len(self.mode_weights) != self.n_modes:
            raise ValueError("need one weight per mode")
        if np.any(self.mode_weights <= 1):
            raise ValueError("reference weights must all exceed 1")
        self.indices = _multi_indices(self.n_modes, self.max_degree)
        self.n_indices = len(self.indices)
        self.degrees = self.indices.sum(axis=1)
        self.factorials = np.array(
            [np.prod([factorial(int(a)) for a in alpha]) for alpha in self.indices],
            dtype=float,
        )
        self._pos = {tuple(alpha): i for i, alpha in enumerate(self.indices)}

    def position(self, alpha) -> int:
        return self._pos[tuple(int(a) for a in alpha)]

    @property
    def pair_table(self):
        """(I, J, K) with alpha_I + alpha_J = alpha_K, all degrees <= M."""
        tab = self._cache.get("pairs")
        if tab is None:
            I, J, K = [], [], []
            for i, a in enumerate(self.indices):
                for j, b in enumerate(self.indices):
                    if self.degrees[i] + self.degrees[j] <= self.max_degree:
                        I.append(i)
                        J.append(j)
                        K.append(self._pos[tuple(a + b)])
            tab = (np.array(I), np.array(J), np.array(K))
            self._cache["pairs"] = tab
        return tab

    @property
    def raise_table(self) -> np.ndarray:
        """raise_table[i, m] = position of alpha_i + e_m, or -1 past degree M."""
        tab = self._cache.get("raise")
        if tab is None:
            tab = np.full((self.n_indices, self.n_modes), -1, dtype=int)
            for i, a in enumerate(self.indices):
                for m in range(self.n_modes):
                    if self.degrees[i] < self.max_degree:
                        up = a.copy()
                        up[m] += 1
                        tab[i, m] = self._pos[tuple(up)]
            self._cache["raise"] = tab
        return tab

    @property
    def lower_table(self) -> np.ndarray:
        """lower_table[i, m] = position of alpha_i - e_m, or -1 if alpha_im = 0."""
        tab = self._cache.get("lower")
        if tab is None:
            tab = np.full((self.n_indices, self.n_modes), -1, dtype=int)
            for i, a in enumerate(self.indices):
                for m in range(self.n_modes):
                    if a[m] > 0:
                        dn = a.copy()
                        dn[m] -= 1
                        tab[i, m] = self._pos[tuple(dn)]
            self._cache["lower"] = tab
        return tab

    def monomials(self, zeta: np.ndarray) -> np.ndarray:
        """zeta^alpha for every stored multi-index."""
        zeta = np.asarray(zeta, dtype=complex)
        if zeta.shape != (self.n_modes,):
            raise ValueError("test vector has wrong mode count")
        with np.errstate(invalid="ignore"):
            out = np.prod(zeta[None, :] ** self.indices, axis=1)
        return out

    def convolve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Wick coefficient convolution; works on (n_idx, ...) stacks."""
        I, J, K = self.pair_table
        out = np.zeros_like(np.broadcast_arrays(a, b)[0])
        np.add.at(out, K, a[I] * b[J])
        return out

    def gamma_matrix(self, mode_map: np.ndarray) -> np.ndarray:
        """Matrix of the second quantization Gamma(B) in the Wick basis.

        Polynomial substitution zeta -> B^T zeta, built column by column:
        the column of alpha + e_m is the Wick product of the column of
        alpha with the first-degree image of mode m.
        """
        B = np.asarray(mode_map, dtype=complex)
        key = ("gamma", B.tobytes())
        mat = self._cache.get(key)
        if mat is not None:
            return mat
        n = self.n_modes
        if B.shape != (n, n):
            raise ValueError("mode map must be n_modes x n_modes")
        cols = np.zeros((self.n_indices, self.n_indices), dtype=complex)
        cols[0, 0] = 1.0  # vacuum column
        # First-degree images L_m: coefficients of (B^T zeta)_m = sum_j B_jm zeta_j.
        first = np.zeros((n, self.n_indices), dtype=complex)
        for m in range(n):
            for jmode in range(n):
                first[m, self.position(np.eye(n, dtype=int)[jmode])] = B[jmode, m]
        for i in np.argsort(self.degrees, kind="stable"):
            if self.degrees[i] == 0:
                continue
            m = int(np.nonzero(self.indices[i])[0][0])
            parent = self.indices[i].copy()
            parent[m] -= 1
            cols[:, i] = self.convolve(cols[:, self.position(parent)], first[m])
        self._cache[key] = cols
        return cols


@dataclass
class TestVector:
    """Coordinates over the Gaussian modes with the weighted p-norms."""

    space: ChaosSpace
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=complex)
        if self.coords.shape != (self.space.n_modes,):
            raise ValueError("coordinate count must match the mode count")

    def norm_p(self, p: int) -> float:
        w = self.space.mode_weights ** p
        return float(np.sqrt(np.sum(np.abs(w * self.coords) ** 2)))


@dataclass
class ChaosVector:
    """Scalar chaos expansion: one complex coefficient per multi-index."""

    space: ChaosSpace
    coeffs: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.space.n_indices,):
            raise ValueError("coefficient count must match the index table")

    @classmethod
    def zero(cls, space: ChaosSpace) -> "ChaosVector":
        return cls(space, np.zeros(space.n_indices, dtype=complex))

    @classmethod
    def vacuum(cls, space: ChaosSpace) -> "ChaosVector":
        c = np.zeros(space.n_indices, dtype=complex)
        c[0] = 1.0
        return cls(space, c)

    @classmethod
    def first_chaos(cls, space: ChaosSpace, coords) -> "ChaosVector":
        out = cls.zero(space)
        for m, c in enumerate(np.asarray(coords, dtype=complex)):
            out.coeffs[space.position(np.eye(space.n_modes, dtype=int)[m])] = c
        return out

    def degree(self) -> int:
        nz = np.nonzero(np.abs(self.coeffs) > 0)[0]
        return int(self.space.degrees[nz].max()) if len(nz) else 0

    def norm0(self) -> float:
        return float(np.sqrt(np.sum(self.space.factorials * np.abs(self.coeffs) ** 2)))

    def conj_coeffs(self) -> "ChaosVector":
        return ChaosVector(self.space, np.conj(self.coeffs), self.truncated)

    def __add__(self, other):
        return ChaosVector(self.space, self.coeffs + other.coeffs,
                           self.truncated or other.truncated)

    def __sub__(self, other):
        return ChaosVector(self.space, self.coeffs - other.coeffs,
                           self.truncated or other.truncated)

    def __mul__(self, c):
        return ChaosVector(self.space, self.coeffs * c, self.truncated)

    __rmul__ = __mul__


def exp_vector(space: ChaosSpace, zeta) -> ChaosVector:
    """Exponential (coherent) vector: coefficients zeta^alpha / alpha!."""
    zeta = np.asarray(zeta, dtype=complex)
    return ChaosVector(space, space.monomials(zeta) / space.factorials)


def duality(phi: ChaosVector, psi: ChaosVector) -> complex:
    """Bilinear pairing <<Phi, Psi>> = sum alpha! a_alpha b_alpha."""
    return complex(np.sum(phi.space.factorials * phi.coeffs * psi.coeffs))


def s_transform(phi: ChaosVector, zeta) -> complex:
    """S Phi(zeta) = <<Phi, phi_zeta>> = sum_alpha a_alpha zeta^alpha."""
    return complex(np.dot(phi.coeffs, phi.space.monomials(zeta)))


def wick_product(phi: ChaosVector, psi: ChaosVector) -> ChaosVector:
    """Coefficient convolution; exact when deg phi + deg psi <= M."""
    space = phi.space
    out = space.convolve(phi.coeffs, psi.coeffs)
    spill = phi.degree() + psi.degree() > space.max_degree
    return ChaosVector(space, out, truncated=spill or phi.truncated or psi.truncated)


def wick_power(phi: ChaosVector, k: int) -> ChaosVector:
    out = ChaosVector.vacuum(phi.space)
    for _ in range(k):
        out = wick_product(out, phi)
    return out


def annihilate(space: ChaosSpace, y, phi: ChaosVector) -> ChaosVector:
    """Lowering map: (a_y Phi)_beta = sum_m y_m (beta_m + 1) a_{beta+e_m}."""
    y = np.asarray(y.coords if isinstance(y, TestVector) else y, dtype=complex)
    out = np.zeros(space.n_indices, dtype=complex)
    up = space.raise_table
    for m in range(space.n_modes):
        ok = up[:, m] >= 0
        out[ok] += y[m] * (space.indices[ok, m] + 1) * phi.coeffs[up[ok, m]]
    return ChaosVector(space, out, phi.truncated)


def create(space: ChaosSpace, y, phi: ChaosVector) -> ChaosVector:
    """Raising map: (a+_y Phi)_beta = sum_m y_m a_{beta-e_m}.

    Coefficients pushed past degree M are dropped and flagged.
    """
    y = np.asarray(y.coords if isinstance(y, TestVector) else y, dtype=complex)
    out = np.zeros(space.n_indices, dtype=complex)
    dn = space.lower_table
    for m in range(space.n_modes):
        ok = dn[:, m] >= 0
        out[ok] += y[m] * phi.coeffs[dn[ok, m]]
    top = space.degrees == space.max_degree
    spilled = bool(np.any(np.abs(phi.coeffs[top]) > 0) and np.any(np.abs(y) > 0))
    return ChaosVector(space, out, truncated=spilled or phi.truncated)


def second_quantization(space: ChaosSpace, mode_map, phi: ChaosVector) -> ChaosVector:
    """Gamma(B): acts as B^{tensor k} on the degree-k block (exact)."""
    mat = space.gamma_matrix(np.asarray(mode_map, dtype=complex))
    return ChaosVector(space, mat @ phi.coeffs, phi.truncated)


def norm_beta(phi: ChaosVector, p: int, beta: float) -> float:
    """Graded weighted norm; p < 0 selects the dual (1 - beta) scale."""
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    space = phi.space
    sign = 1.0 if p >= 0 else -1.0
    deg_fact = np.array([factorial(int(d)) for d in space.degrees], dtype=float)
    wpow = np.prod(space.mode_weights[None, :] ** (2.0 * p * space.indices), axis=1)
    weights = (deg_fact ** (sign * beta)) * space.factorials * wpow
    return float(np.sqrt(np.sum(weights * np.abs(phi.coeffs) ** 2)))


@dataclass
class FockOperator:
    """Dense operator on the truncated chaos space (Wick-basis matrix)."""

    space: ChaosSpace
    matrix: np.ndarray

    def __post_init__(self):
        n = self.space.n_indices
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (n, n):
            raise ValueError("operator matrix has wrong shape")

    @classmethod
    def identity(cls, space: ChaosSpace) -> "FockOperator":
        return cls(space, np.eye(space.n_indices, dtype=complex))

    @classmethod
    def zero(cls, space: ChaosSpace) -> "FockOperator":
        return cls(space, np.zeros((space.n_indices, space.n_indices), dtype=complex))

    @classmethod
    def annihilation(cls, space: ChaosSpace, y) -> "FockOperator":
        y = np.asarray(y.coords if isinstance(y, TestVector) else y, dtype=complex)
        M = np.zeros((space.n_indices, space.n_indices), dtype=complex)
        up = space.raise_table
        for m in range(space.n_modes):
            ok = np.nonzero(up[:, m] >= 0)[0]
            M[ok, up[ok, m]] += y[m] * (space.indices[ok, m] + 1)
        return cls(space, M)

    @classmethod
    def creation(cls, space: ChaosSpace, y) -> "FockOperator":
        y = np.asarray(y.coords if isinstance(y, TestVector) else y, dtype=complex)
        M = np.zeros((space.n_indices, space.n_indices), dtype=complex)
        dn = space.lower_table
        for m in range(space.n_modes):
            ok = np.nonzero(dn[:, m] >= 0)[0]
            M[ok, dn[ok, m]] += y[m]
        return cls(space, M)

    def compose(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.space, self.matrix @ other.matrix)

    def __matmul__(self, other):
        return self.compose(other)

    def commutator(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.space,
                            self.matrix @ other.matrix - other.matrix @ self.matrix)

    def apply(self, phi: ChaosVector) -> ChaosVector:
        return ChaosVector(self.space, self.matrix @ phi.coeffs, phi.truncated)


def operator_symbol(xi: FockOperator, zeta, eta) -> complex:
    """Symbol <<Xi phi_zeta, phi_eta>> on the truncation."""
    return s_transform(xi.apply(exp_vector(xi.space, zeta)), eta)


@dataclass
class GrowthFit:
    C: float
    K: float
    cr_residual: float
    covered: bool

    def envelope(self, x: float) -> float:
        return self.C * np.exp(self.K * x)


def growth_bound_fit(F, space: ChaosSpace, p: int, sample_radii,
                     n_directions: int = 6, seed: int = 0,
                     cr_spacing: float = 1e-3) -> GrowthFit:
    """Fit |F(zeta)| <= C exp(K |zeta|_p^2) over ray samples.

    K is the nonnegative least-squares slope of log|F| against |zeta|_p^2
    and C is lifted so the envelope covers every sample. Also estimates the
    Cauchy-Riemann residual of z -> F(z*zeta + eta) on a fourth-order
    stencil as the entireness check.
    """
    rng = np.random.default_rng(seed)
    radii = np.asarray(sample_radii, dtype=float)
    n = space.n_modes
    wp = space.mode_weights ** p
    dirs = rng.standard_normal((n_directions, n)) + 1j * rng.standard_normal((n_directions, n))
    dirs /= np.sqrt(np.sum(np.abs(wp * dirs) ** 2, axis=1))[:, None]  # |dir|_p = 1
    xs, ys = [], []
    for r in radii:
        for d in dirs:
            val = abs(F(r * d))
            xs.append(r * r)
            ys.append(np.log(max(val, 1e-300)))
    xs, ys = np.asarray(xs), np.asarray(ys)
    finite = np.isfinite(ys)
    if not np.all(finite):
        return GrowthFit(np.inf, np.inf, np.inf, covered=False)
    xbar, ybar = xs.mean(), ys.mean()
    denom = np.sum((xs - xbar) ** 2)
    slope = float(np.sum((xs - xbar) * (ys - ybar)) / denom) if denom > 0 else 0.0
    K = max(slope, 0.0)
    C = float(np.exp(np.max(ys - K * xs)))
    covered = bool(np.all(ys <= np.log(C) + K * xs + 1e-9))
    # Entireness probe along a random complex line.
    zdir, base = dirs[0], 0.5 * dirs[min(1, n_directions - 1)]
    h = cr_spacing
    z0 = 0.37 + 0.21j

    def G(zv):
        return F(zv * zdir + base)

    fx = [G(z0 + sgn * h) for sgn in (-2, -1, 1, 2)]
    fy = [G(z0 + 1j * sgn * h) for sgn in (-2, -1, 1, 2)]
    dfdx = (fx[0] - 8 * fx[1] + 8 * fx[2] - fx[3]) / (12 * h)
    dfdy = (fy[0] - 8 * fy[1] + 8 * fy[2] - fy[3]) / (12 * h)
    cr = abs(0.5 * (dfdx + 1j * dfdy))
    return GrowthFit(C=C, K=K, cr_residual=float(cr), covered=covered)


# ---------------------------------------------------------------------------
# Chaos-valued fields and the Wick evolution
# ---------------------------------------------------------------------------

@dataclass
class ChaosState:
    """Chaos expansion of a model state: one state block per multi-index."""

    space: ChaosSpace
    model: Model
    data: np.ndarray  # (n_indices, s, *grid.shape) complex

    def __post_init__(self):
        expect = (self.space.n_indices, len(self.model.roles)) + self.model.grid.shape
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != expect:
            raise ValueError(f"chaos state shape {self.data.shape}, expected {expect}")

    @classmethod
    def deterministic(cls, space: ChaosSpace, model: Model, phi0: State) -> "ChaosState":
        data = np.zeros((space.n_indices, len(model.roles)) + model.grid.shape,
                        dtype=complex)
        data[0] = phi0.data
        return cls(space, model, data)

    def block(self, i: int) -> State:
        return State(self.model.grid, self.data[i].copy(), self.model.roles)

    def degree_energy(self) -> np.ndarray:
        """Energy alpha! ||Phi_alpha||_H^2 aggregated per degree."""
        per_index = np.array([
            self.space.factorials[i]
            * self.model.norm(State(self.model.grid, self.data[i], self.model.roles)) ** 2
            for i in range(self.space.n_indices)
        ])
        out = np.zeros(self.space.max_degree + 1)
        np.add.at(out, self.space.degrees, per_index)
        return out

    def s_transform(self, zeta) -> State:
        mono = self.space.monomials(zeta)
        values = np.tensordot(mono, self.data, axes=(0, 0))
        return State(self.model.grid, values, self.model.roles)


class _WickFieldAlgebra:
    """Wick products of chaos-valued scalar fields on a grid."""

    def __init__(self, space: ChaosSpace, grid_shape):
        self.space = space
        self.shape = (space.n_indices,) + tuple(grid_shape)

    def zero(self):
        return np.zeros(self.shape, dtype=complex)

    def product(self, a, b):
        I, J, K = self.space.pair_table
        out = self.zero()
        np.add.at(out, K, a[I] * b[J])
        return out

    def conj(self, a):
        return np.conj(a)

    def re(self, a):
        return 0.5 * (a + np.conj(a))

    def power(self, a, k):
        out = self.zero()
        out[0] = 1.0
        for _ in range(k):
            out = self.product(out, a)
        return out

    def sin_series(self, a):
        """Wick sine via Taylor expansion around the degree-0 block (exact)."""
        c = a[0].copy()
        shifted = a.copy()
        shifted[0] = 0.0
        derivs = [np.sin(c), np.cos(c), -np.sin(c), -np.cos(c)]
        out = self.zero()
        term = self.zero()
        term[0] = 1.0  # (a - c)^{:0:}
        fact = 1.0
        for j in range(self.space.max_degree + 1):
            if j > 0:
                term = self.product(term, shifted)
                fact *= j
            out = out + (derivs[j % 4] / fact) * term
        return out


def wick_nonlinearity(model: Model, chaos_state: ChaosState) -> ChaosState:
    """Wick quantization of the model nonlinearity, block by block.

    Polynomial terms become Wick powers (conjugates via the doubled-variable
    convention); the sine nonlinearity uses its exact truncated Wick-Taylor
    series. Degree-0-only inputs reproduce the ordinary J.
    """
    space, pr = chaos_state.space, model.params
    alg = _WickFieldAlgebra(space, model.grid.shape)
    d = chaos_state.data
    out = np.zeros_like(d)

    def dealias(block_stack):
        if not model.dealias:
            return block_stack
        coeffs = model.grid.to_spectral(block_stack)
        coeffs *= model.grid.dealias_mask
        return model.grid.to_physical(coeffs)

    if model.name == "nls":
        if pr.sign != 0:
            if pr.p % 2 == 0:
                raise ValueError("Wick quantization needs an odd power p")
            psi = d[:, 0]
            mag = alg.power(alg.product(psi, alg.conj(psi)), (pr.p - 1) // 2)
            out[:, 0] = 1j * pr.sign * dealias(alg.product(mag, psi))
    elif model.name == "klein_gordon":
        if pr.sign != 0:
            if pr.p % 2 == 0:
                raise ValueError("Wick quantization needs an odd power p")
            psi = d[:, 0]
            mag = alg.power(alg.product(psi, alg.conj(psi)), (pr.p - 1) // 2)
            out[:, 1] = pr.sign * dealias(alg.product(mag, psi))
    elif model.name == "sine_gordon":
        out[:, 1] = pr.g * alg.sin_series(d[:, 0])
    elif model.name == "zakharov":
        psi, v = d[:, 0], d[:, 1]
        out[:, 0] = -1j * dealias(alg.product(psi, alg.re(v)))
        density = dealias(alg.product(psi, alg.conj(psi)))
        coeffs = model.grid.to_spectral(density)
        out[:, 1] = 1j * model.grid.to_physical(model._absgrad * coeffs)
    elif model.name == "maxwell_dirac":
        psi1, psi2 = d[:, 0], d[:, 1]
        a0, a1 = alg.re(d[:, 2]), alg.re(d[:, 4])
        out[:, 0] = 1j * dealias(alg.product(a0, psi1) + alg.product(a1, psi2))
        out[:, 1] = 1j * dealias(alg.product(a0, psi2) + alg.product(a1, psi1))
        j0 = alg.product(psi1, alg.conj(psi1)) + alg.product(psi2, alg.conj(psi2))
        j1 = 2.0 * alg.re(alg.product(psi1, alg.conj(psi2)))
        k2 = pr.k0**2
        out[:, 3] = dealias(j0) + k2 * d[:, 2]
        out[:, 5] = dealias(j1) + k2 * d[:, 4]
    else:  # pragma: no cover
        raise ValueError(f"unknown model {model.name}")
    return ChaosState(space, model, out)


@dataclass
class WickTrajectory:
    times: np.ndarray
    snapshots: list[ChaosState]
    tail_fractions: np.ndarray
    truncation_flagged: bool

    def final(self) -> ChaosState:
        return self.snapshots[-1]


def solve_wick_evolution(model: Model, phi0: State, noise_fields, T: float,
                         dt: float, space: ChaosSpace,
                         record_every: int | None = None,
                         tail_threshold: float = 0.2) -> WickTrajectory:
    """March the Wick-quantized equation on the truncated chaos space.

    ``noise_fields`` lists the potential fields q_i coupled to the Gaussian
    modes; the noise term is the time-frozen first-chaos element
    Z = sum_i q_i xi_i acting by Wick multiplication, so Wick multiplication
    is lower triangular in degree and the degree-0 block evolves as the
    deterministic equation. The S-transform of the solution at test vector
    zeta follows the deterministic flow with potential sum_i zeta_i q_i up
    to O(dt) and the degree-M truncation tail.
    """
    n_steps = round(T / dt)
    if not np.isclose(n_steps * dt, T, rtol=1e-9, atol=0):
        raise ValueError("dt must divide T")
    record_every = record_every or max(1, n_steps // 8)
    fields = [np.asarray(getattr(q, "values", q), dtype=complex) for q in noise_fields]
    if len(fields) > space.n_modes:
        raise ValueError("more noise fields than chaos modes")
    chaos = ChaosState.deterministic(space, model, phi0)
    gen = model.generator
    dn = space.lower_table

    def z_wick(data):
        out = np.zeros_like(data)
        for m, q in enumerate(fields):
            ok = np.nonzero(dn[:, m] >= 0)[0]
            out[ok] += q * data[dn[ok, m]]
        return out

    times = [0.0]
    snaps = [ChaosState(space, model, chaos.data.copy())]
    tails = []
    flagged = False
    for n in range(n_steps):
        drift = wick_nonlinearity(model, chaos).data + z_wick(chaos.data)
        new = gen.propagate_blocks(dt, chaos.data + dt * drift)
        chaos = ChaosState(space, model, new)
        energy = chaos.degree_energy()
        total = float(np.sum(energy))
        tail = float(energy[-1] / total) if total > 0 else 0.0
        tails.append(tail)
        if tail > tail_threshold:
            flagged = True
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            snaps.append(ChaosState(space, model, chaos.data.copy()))
    return WickTrajectory(np.asarray(times), snaps, np.asarray(tails), flagged)


def export_chaos_csv(vec: ChaosVector, path) -> None:
    """Indexed coefficient dump: multi-index, real, imag."""
    with open(path, "w") as fh:
        fh.write("multi_index,real,imag\n")
        for alpha, c in zip(vec.space.indices, vec.coeffs):
            label = "(" + " ".join(str(int(a)) for a in alpha) + ")"
            fh.write(f"{label},{c.real:.17g},{c.imag:.17g}\n")
