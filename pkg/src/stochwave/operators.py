"""Spectral multiplier operators, exact free propagators, and graph norms.

Every linear operator here is diagonal in Fourier space: for each wavenumber
vector k it carries an s x s complex matrix ``symbol(k)`` acting on the
component vector of a state. Wave-type blocks are self-adjoint with respect
to an energy inner product rather than the plain component-wise L2 product;
that inner product is encoded as a positive diagonal per-mode metric, and
"hermitian" throughout this module means metric-Hermitian. The propagator
exp(-i*t*A) is then exactly metric-norm preserving mode by mode.

Supported symbols: laplacian, shifted square root B = sqrt(-Lap + k0^2),
|grad|, the 2x2 wave block i[[0,1],[-B^2,0]] (propagator
[[cos tB, B^-1 sin tB], [-B sin tB, cos tB]]), a 1+1-dimensional Dirac
operator sigma1*k + sigma3*m, the Zakharov block diag(Lap, |grad|), and the
block-diagonal Dirac + two wave pairs used by the Maxwell-Dirac reduction.

The unpaired Nyquist mode is zeroed inside odd-order symbols (|grad|, the
Dirac momentum) so real fields stay real under the operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Grid, State

HERMITICITY_TOL = 1e-13


@dataclass
class SpectralOperator:
    """Per-wavenumber matrix multiplier with optional diagonal metric.

    ``symbol`` has shape (s, s, *grid.shape); ``metric`` is None (plain L2)
    or a positive (s, *grid.shape) weight array defining the inner product
    <u, v> = sum_k sum_a g_a(k) u_a(k) conj(v_a(k)) on spectral coefficients.
    Immutable after construction; derived caches are lazy.
    """

    grid: Grid
    symbol: np.ndarray
    metric: np.ndarray | None = None
    kind: str = "custom"
    hermitian: bool = field(init=False)
    _eig: tuple | None = field(default=None, repr=False, compare=False)
    _prop_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.symbol = np.asarray(self.symbol, dtype=complex)
        s = self.symbol.shape[0]
        if self.symbol.shape[:2] != (s, s) or self.symbol.shape[2:] != self.grid.shape:
            raise ValueError(f"symbol shape {self.symbol.shape} invalid for grid")
        if self.metric is not None:
            self.metric = np.asarray(self.metric, dtype=float)
            if self.metric.shape != (s,) + self.grid.shape:
                raise ValueError("metric shape must be (s, *grid.shape)")
            if np.any(self.metric <= 0):
                raise ValueError("metric weights must be positive")
        self.hermitian = self._check_hermitian()

    @property
    def n_components(self) -> int:
        return self.symbol.shape[0]

    def _flat_symbol(self) -> np.ndarray:
        s = self.n_components
        return self.symbol.reshape(s, s, self.grid.size)

    def _flat_metric(self) -> np.ndarray:
        s = self.n_components
        if self.metric is None:
            return np.ones((s, self.grid.size))
        return self.metric.reshape(s, self.grid.size)

    def _check_hermitian(self) -> bool:
        S = self._flat_symbol()
        g = self._flat_metric()
        GS = g[:, None, :] * S
        dev = np.max(np.abs(GS - np.conj(np.transpose(GS, (1, 0, 2)))))
        scale = 1.0 + np.max(np.abs(GS))
        return bool(dev < HERMITICITY_TOL * scale)

    def scaled(self, c: float) -> "SpectralOperator":
        """Real rescaling; preserves metric-Hermiticity."""
        return SpectralOperator(self.grid, self.symbol * c, self.metric,
                                kind=f"{self.kind}*{c}")

    def _eigensystem(self):
        """Stacked eigendecomposition of the metric-symmetrized symbol."""
        if self._eig is None:
            s = self.n_components
            S = np.moveaxis(self._flat_symbol(), -1, 0)      # (M, s, s)
            g = np.moveaxis(self._flat_metric(), -1, 0)      # (M, s)
            sq = np.sqrt(g)
            H = sq[:, :, None] * S / sq[:, None, :]
            w, U = np.linalg.eigh(H)
            self._eig = (w, U, sq)
        return self._eig

    def propagator_matrices(self, t: float) -> np.ndarray:
        """Dense per-mode matrices of exp(-i*t*symbol), shape (M, s, s)."""
        w, U, sq = self._eigensystem()
        phase = np.exp(-1j * t * w)
        core = np.einsum("mab,mb,mcb->mac", U, phase, np.conj(U))
        return core * sq[:, None, :] / sq[:, :, None]

    def propagate(self, t: float, state: State) -> State:
        """Apply exp(-i*t*A); exactly metric-norm preserving per mode."""
        if not self.hermitian:
            raise ValueError("propagate requires a (metric-)Hermitian symbol")
        self._check_state(state)
        coeffs = state.spectral()
        s = self.n_components
        flat = coeffs.reshape(s, self.grid.size)
        if s == 1:
            out = flat * self._cached_phase(t)
        else:
            key = float(t)
            P = self._prop_cache.get(key)
            if P is None:
                P = self.propagator_matrices(t)
                if len(self._prop_cache) > 16:
                    self._prop_cache.clear()
                self._prop_cache[key] = P
            out = np.einsum("mab,bm->am", P, flat)
        return State.from_spectral(self.grid, out.reshape(coeffs.shape), state.roles)

    def _cached_phase(self, t: float) -> np.ndarray:
        key = ("phase", float(t))
        ph = self._prop_cache.get(key)
        if ph is None:
            sym = np.real(self._flat_symbol()[0, 0])
            ph = np.exp(-1j * t * sym)
            if len(self._prop_cache) > 16:
                self._prop_cache.clear()
            self._prop_cache[key] = ph
        return ph

    def propagate_blocks(self, t: float, data: np.ndarray) -> np.ndarray:
        """Apply exp(-i*t*A) to a (B, s, *grid.shape) stack of states."""
        if not self.hermitian:
            raise ValueError("propagate requires a (metric-)Hermitian symbol")
        s = self.n_components
        B = data.shape[0]
        coeffs = self.grid.to_spectral(data).reshape(B, s, self.grid.size)
        if s == 1:
            sym = np.real(self._flat_symbol()[0, 0])
            out = coeffs * np.exp(-1j * t * sym)
        else:
            P = self.propagator_matrices(t)
            out = np.einsum("mab,nbm->nam", P, coeffs)
        return self.grid.to_physical(out.reshape(data.shape))

    def apply(self, state: State) -> State:
        """Spectral action: multiply each coefficient vector by symbol(k)."""
        self._check_state(state)
        coeffs = state.spectral()
        s = self.n_components
        flat = coeffs.reshape(s, self.grid.size)
        out = np.einsum("abm,bm->am", self._flat_symbol(), flat)
        return State.from_spectral(self.grid, out.reshape(coeffs.shape), state.roles)

    def apply_spectral(self, flat: np.ndarray) -> np.ndarray:
        """Same as apply() but on flat (s, M) spectral coefficients."""
        return np.einsum("abm,bm->am", self._flat_symbol(), flat)

    def metric_norm(self, state: State) -> float:
        self._check_state(state)
        coeffs = state.spectral().reshape(self.n_components, self.grid.size)
        g = self._flat_metric()
        return float(np.sqrt(np.sum(g * np.abs(coeffs) ** 2).real))

    def metric_inner(self, a: State, b: State) -> complex:
        """Energy-weighted pairing <a, b>, conjugating the second argument."""
        ca = a.spectral().reshape(self.n_components, self.grid.size)
        cb = b.spectral().reshape(self.n_components, self.grid.size)
        g = self._flat_metric()
        return complex(np.sum(g * ca * np.conj(cb)))

    def graph_norm(self, state: State, j: int) -> float:
        """Metric norm of A^j applied to the state; j = 0 is the plain norm."""
        if j < 0:
            raise ValueError("graph_norm power j must be >= 0")
        return self.graph_norm_ladder(state, j)[j]

    def graph_norm_ladder(self, state: State, j_max: int) -> np.ndarray:
        """All graph norms j = 0..j_max from one spectral transform."""
        if j_max < 0:
            raise ValueError("graph_norm power j must be >= 0")
        self._check_state(state)
        flat = state.spectral().reshape(self.n_components, self.grid.size)
        g = self._flat_metric()
        out = np.empty(j_max + 1)
        for j in range(j_max + 1):
            out[j] = np.sqrt(np.sum(g * np.abs(flat) ** 2).real)
            if j < j_max:
                flat = self.apply_spectral(flat)
        return out

    def _check_state(self, state: State):
        if state.grid is not self.grid and state.grid != self.grid:
            raise ValueError("state grid does not match operator grid")
        if state.n_components != self.n_components:
            raise ValueError(
                f"state has {state.n_components} components, "
                f"operator expects {self.n_components}"
            )


def _zeroed_nyquist_k(grid: Grid, axis: int) -> np.ndarray:
    k = grid.k_axes[axis].copy()
    k[grid.npts[axis] // 2] = 0.0
    shape = [1] * grid.dim
    shape[axis] = grid.npts[axis]
    return k.reshape(shape)


def _abs_grad_symbol(grid: Grid) -> np.ndarray:
    ksq = np.zeros(grid.shape)
    for ax in range(grid.dim):
        ksq = ksq + _zeroed_nyquist_k(grid, ax) ** 2
    return np.sqrt(ksq)


def _wave_symbol_metric(grid: Grid, k0: float):
    if k0 <= 0:
        raise ValueError("wave blocks need k0 > 0 so B is invertible")
    b2 = grid.k_squared + k0**2
    sym = np.zeros((2, 2) + grid.shape, dtype=complex)
    sym[0, 1] = 1j
    sym[1, 0] = -1j * b2
    metric = np.stack([b2, np.ones(grid.shape)])
    return sym, metric


def _dirac_symbol(grid: Grid, m: float):
    if grid.dim != 1:
        raise ValueError("dirac_1d is defined on 1-dimensional grids")
    if m < 0:
        raise ValueError("Dirac mass must be >= 0")
    k = _zeroed_nyquist_k(grid, 0).ravel()
    sym = np.zeros((2, 2) + grid.shape, dtype=complex)
    sym[0, 0] = m
    sym[1, 1] = -m
    sym[0, 1] = k
    sym[1, 0] = k
    return sym


def make_operator(kind: str, grid: Grid, **params) -> SpectralOperator:
    """Build one of the named multiplier operators.

    kinds: laplacian, shifted_sqrt (needs k0), abs_grad, wave_block (k0),
    dirac_1d (m), zakharov_block, maxwell_dirac_block (k0, m), identity.
    """

    def need(name):
        if name not in params:
            raise ValueError(f"operator kind '{kind}' requires parameter '{name}'")
        return float(params[name])

    shape = grid.shape
    if kind == "laplacian":
        sym = (-grid.k_squared)[None, None]
        return SpectralOperator(grid, sym, kind=kind)
    if kind == "shifted_sqrt":
        k0 = need("k0")
        if k0 < 0:
            raise ValueError("k0 must be >= 0")
        sym = np.sqrt(grid.k_squared + k0**2)[None, None]
        return SpectralOperator(grid, sym, kind=kind)
    if kind == "abs_grad":
        return SpectralOperator(grid, _abs_grad_symbol(grid)[None, None], kind=kind)
    if kind == "wave_block":
        sym, metric = _wave_symbol_metric(grid, need("k0"))
        return SpectralOperator(grid, sym, metric, kind=kind)
    if kind == "dirac_1d":
        return SpectralOperator(grid, _dirac_symbol(grid, need("m")), kind=kind)
    if kind == "zakharov_block":
        sym = np.zeros((2, 2) + shape, dtype=complex)
        sym[0, 0] = -grid.k_squared
        sym[1, 1] = _abs_grad_symbol(grid)
        return SpectralOperator(grid, sym, kind=kind)
    if kind == "maxwell_dirac_block":
        if grid.dim != 1:
            raise ValueError("maxwell_dirac_block is defined on 1-d grids")
        m = need("m")
        wave_sym, wave_metric = _wave_symbol_metric(grid, need("k0"))
        dirac = _dirac_symbol(grid, m)
        sym = np.zeros((6, 6) + shape, dtype=complex)
        sym[0:2, 0:2] = dirac
        sym[2:4, 2:4] = wave_sym
        sym[4:6, 4:6] = wave_sym
        metric = np.concatenate(
            [np.ones((2,) + shape), wave_metric, wave_metric]
        )
        return SpectralOperator(grid, sym, metric, kind=kind)
    if kind == "identity":
        s = int(params.get("s", 1))
        sym = np.zeros((s, s) + shape, dtype=complex)
        for a in range(s):
            sym[a, a] = 1.0
        return SpectralOperator(grid, sym, kind=kind)
    raise ValueError(f"unknown operator kind '{kind}'")


# Functional aliases for the module-level operation names.

def apply(op: SpectralOperator, state: State) -> State:
    return op.apply(state)


def propagate(op: SpectralOperator, t: float, state: State) -> State:
    return op.propagate(t, state)


def graph_norm(op: SpectralOperator, state: State, j: int) -> float:
    return op.graph_norm(state, j)
