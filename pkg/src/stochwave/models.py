"""The five concrete wave models behind the unified evolution dphi/dt = -i*A*phi + J(phi).

Each builder normalizes its classical form to the abstract one, so the
generator A is always (metric-)self-adjoint and J is whatever is left on the
right-hand side after that normalization. Concretely:

nls            i dpsi/dt + Lap psi + sign |psi|^{p-1} psi = 0 becomes
               A = -Lap, J = i*sign*|psi|^{p-1} psi  (paraxial beam equation;
               the transverse plane plays the role of space).
klein_gordon   psi_tt + B^2 psi = sign |psi|^{p-1} psi with B = sqrt(-Lap+k0^2),
               first-order form in (psi, v=psi_t): A = i[[0,I],[-B^2,0]],
               J = (0, sign |psi|^{p-1} psi), state space D(B) + L2.
sine_gordon    u_tt + B^2 u = g sin u, same wave block, J = (0, g sin u).
zakharov       i psi_t + Lap psi = psi Re(v), i v_t + |grad| v = -|grad||psi|^2
               gives A = diag(-Lap, -|grad|), J = (-i psi Re v, i |grad||psi|^2).
maxwell_dirac  1+1-dimensional reduction with 2-spinors (alpha = sigma1,
               beta = sigma3, same anticommutation algebra as the 3+1 case):
               state (psi1, psi2, A0, A0_t, A1, A1_t), generator
               diag(Dirac(m), wave(k0), wave(k0)), coupling
               J_psi = i (A0 + A1 sigma1) psi and wave sources
               (0, J_mu + k0^2 A_mu) with J_0 = |psi|^2, J_1 = 2 Re(psi1 conj psi2);
               the k0^2 term undoes the artificial mass shift that makes the
               wave block invertible. This sign/phase choice is the one that
               conserves the charge int |psi|^2 along the coupled flow.

Note the factors of i on the NLS, Zakharov and Dirac couplings: they are part
of the normalization and are exactly what makes mass/charge invariants of the
deterministic flow. The sine-Gordon estimate ||J(phi)|| <= ||phi|| holds on
the energy space for real u, g <= 1 and k0 >= 1 (|sin x| <= |x| pointwise plus
||u|| <= ||B u||); the estimate sampler therefore draws real states for this
model.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .grids import Field, Grid, State
from .operators import SpectralOperator, make_operator

MODEL_NAMES = ("nls", "klein_gordon", "zakharov", "maxwell_dirac", "sine_gordon")

_ROLES = {
    "nls": ("psi",),
    "klein_gordon": ("psi", "psi_t"),
    "sine_gordon": ("u", "u_t"),
    "zakharov": ("psi", "v"),
    "maxwell_dirac": ("psi1", "psi2", "A0", "A0_t", "A1", "A1_t"),
}

# Polynomial degree of J in the state, used for estimate envelopes.
_J_DEGREE = {
    "nls": lambda p: p,
    "klein_gordon": lambda p: p,
    "sine_gordon": lambda p: 1,
    "zakharov": lambda p: 2,
    "maxwell_dirac": lambda p: 2,
}

_DEFAULT_SMOOTHNESS = {
    "nls": 2,
    "klein_gordon": 1,
    "sine_gordon": 1,
    "zakharov": 1,
    "maxwell_dirac": 1,
}


@dataclass(frozen=True)
class ModelParams:
    p: int = 3
    sign: int = 1
    g: float = 1.0
    k0: float = 1.0
    m: float = 1.0


@dataclass
class Model:
    """Named bundle: generator, component structure, nonlinearity, invariants."""

    name: str
    grid: Grid
    generator: SpectralOperator
    roles: tuple[str, ...]
    params: ModelParams
    smoothness: int
    dealias: bool = True
    potential_modes: list[Field] | None = None
    break_j_hook: bool = False  # failure-injection hook for the verify command
    _absgrad: np.ndarray | None = dc_field(default=None, repr=False)

    # ---- state helpers -------------------------------------------------

    def zero_state(self) -> State:
        return State.zeros(self.grid, self.roles)

    def state_from_fields(self, fields) -> State:
        st = State.from_fields(fields, self.roles)
        self.generator._check_state(st)
        return st

    def norm(self, state: State) -> float:
        """The model's H-norm (energy-weighted for wave blocks)."""
        return self.generator.metric_norm(state)

    def inner(self, a: State, b: State) -> complex:
        return self.generator.metric_inner(a, b)

    def graph_norm(self, state: State, j: int) -> float:
        return self.generator.graph_norm(state, j)

    def graph_norms(self, state: State, j_max: int | None = None) -> np.ndarray:
        j_max = self.smoothness if j_max is None else j_max
        return self.generator.graph_norm_ladder(state, j_max)

    def sum_graph_norms(self, state: State, j_max: int | None = None) -> float:
        return float(np.sum(self.graph_norms(state, j_max)))

    def _dealias(self, values: np.ndarray) -> np.ndarray:
        if not self.dealias:
            return values
        coeffs = self.grid.to_spectral(values)
        coeffs *= self.grid.dealias_mask
        return self.grid.to_physical(coeffs)

    def _apply_absgrad(self, values: np.ndarray) -> np.ndarray:
        coeffs = self.grid.to_spectral(values)
        return self.grid.to_physical(self._absgrad * coeffs)

    # ---- the nonlinearity ----------------------------------------------

    def apply_J(self, state: State) -> State:
        """Evaluate J(state) in the abstract normalization (see module doc)."""
        self.generator._check_state(state)
        out = self._raw_J(state)
        if self.break_j_hook:
            out = out * (1.0 + self.norm(state))
        return out

    def _raw_J(self, state: State) -> State:
        name, pr = self.name, self.params
        out = self.zero_state()
        if name == "nls":
            psi = state.data[0]
            if pr.sign != 0:
                w = pr.sign * np.abs(psi) ** (pr.p - 1) * psi
                out.data[0] = 1j * self._dealias(w)
        elif name == "klein_gordon":
            psi = state.data[0]
            if pr.sign != 0:
                out.data[1] = self._dealias(pr.sign * np.abs(psi) ** (pr.p - 1) * psi)
        elif name == "sine_gordon":
            out.data[1] = pr.g * np.sin(state.data[0])
        elif name == "zakharov":
            psi, v = state.data[0], state.data[1]
            out.data[0] = -1j * self._dealias(psi * np.real(v))
            out.data[1] = 1j * self._apply_absgrad(self._dealias(np.abs(psi) ** 2))
        elif name == "maxwell_dirac":
            psi1, psi2 = state.data[0], state.data[1]
            a0, a1 = np.real(state.data[2]), np.real(state.data[4])
            out.data[0] = 1j * self._dealias(a0 * psi1 + a1 * psi2)
            out.data[1] = 1j * self._dealias(a0 * psi2 + a1 * psi1)
            j0 = np.abs(psi1) ** 2 + np.abs(psi2) ** 2
            j1 = 2.0 * np.real(psi1 * np.conj(psi2))
            k2 = pr.k0**2
            out.data[3] = self._dealias(j0) + k2 * state.data[2]
            out.data[5] = self._dealias(j1) + k2 * state.data[4]
        else:  # pragma: no cover
            raise ValueError(f"unknown model {name}")
        return out

    # ---- conserved functionals -----------------------------------------

    def conserved(self, state: State) -> dict[str, float]:
        """Invariants of the deterministic flow (noise-free interpretation)."""
        name, pr, dv = self.name, self.params, self.grid.dv
        out: dict[str, float] = {}
        if name == "nls":
            psi = state.data[0]
            out["mass"] = float(np.sum(np.abs(psi) ** 2) * dv)
            coeffs = self.grid.to_spectral(psi)
            grad2 = float(np.sum(self.grid.k_squared * np.abs(coeffs) ** 2))
            pot = float(np.sum(np.abs(psi) ** (pr.p + 1)) * dv)
            out["energy"] = grad2 - pr.sign * 2.0 / (pr.p + 1) * pot
        elif name == "klein_gordon":
            psi, v = state.data[0], state.data[1]
            b2 = self.grid.k_squared + pr.k0**2
            coeffs = self.grid.to_spectral(psi)
            bnorm2 = float(np.sum(b2 * np.abs(coeffs) ** 2))
            kin = float(np.sum(np.abs(v) ** 2) * dv)
            pot = float(np.sum(np.abs(psi) ** (pr.p + 1)) * dv)
            out["energy"] = 0.5 * kin + 0.5 * bnorm2 - pr.sign / (pr.p + 1) * pot
        elif name == "sine_gordon":
            u, v = state.data[0], state.data[1]
            b2 = self.grid.k_squared + pr.k0**2
            coeffs = self.grid.to_spectral(u)
            bnorm2 = float(np.sum(b2 * np.abs(coeffs) ** 2))
            kin = float(np.sum(np.abs(v) ** 2) * dv)
            cos_term = float(np.sum(np.real(np.cos(u))) * dv)
            out["energy"] = 0.5 * kin + 0.5 * bnorm2 + pr.g * cos_term
        elif name == "zakharov":
            out["mass"] = float(np.sum(np.abs(state.data[0]) ** 2) * dv)
        elif name == "maxwell_dirac":
            out["charge"] = float(
                np.sum(np.abs(state.data[0]) ** 2 + np.abs(state.data[1]) ** 2) * dv
            )
        return out

    # ---- exact/midpoint nonlinear substep for the split-step scheme -----

    def nonlinear_substep(self, state: State, dt: float) -> State:
        """Flow of dphi/dt = J(phi) over dt.

        Exact for nls (pointwise phase rotation), klein_gordon / sine_gordon
        (the forced component is frozen), and zakharov (|psi| and Re v are
        invariant along the substep). Maxwell-Dirac uses the exact pointwise
        spinor rotation with midpoint current evaluation, locally O(dt^3).
        """
        name, pr = self.name, self.params
        out = state.copy()
        if name == "nls":
            if pr.sign != 0:
                psi = state.data[0]
                out.data[0] = psi * np.exp(1j * dt * pr.sign * np.abs(psi) ** (pr.p - 1))
        elif name == "klein_gordon":
            if pr.sign != 0:
                psi = state.data[0]
                out.data[1] = state.data[1] + dt * pr.sign * np.abs(psi) ** (pr.p - 1) * psi
        elif name == "sine_gordon":
            out.data[1] = state.data[1] + dt * pr.g * np.sin(state.data[0])
        elif name == "zakharov":
            psi, v = state.data[0], state.data[1]
            out.data[1] = v + 1j * dt * self._apply_absgrad(np.abs(psi) ** 2)
            out.data[0] = psi * np.exp(-1j * dt * np.real(v))
        elif name == "maxwell_dirac":
            a0, a1 = np.real(state.data[2]), np.real(state.data[4])
            k2 = pr.k0**2

            def rotate(p1, p2, tau):
                ph = np.exp(1j * tau * a0)
                c, s = np.cos(tau * a1), 1j * np.sin(tau * a1)
                return ph * (c * p1 + s * p2), ph * (s * p1 + c * p2)

            m1, m2 = rotate(state.data[0], state.data[1], 0.5 * dt)
            j0 = np.abs(m1) ** 2 + np.abs(m2) ** 2
            j1 = 2.0 * np.real(m1 * np.conj(m2))
            out.data[0], out.data[1] = rotate(state.data[0], state.data[1], dt)
            out.data[3] = state.data[3] + dt * (j0 + k2 * state.data[2])
            out.data[5] = state.data[5] + dt * (j1 + k2 * state.data[4])
        return out

    # ---- gauge diagnostics (Maxwell-Dirac) -------------------------------

    def make_gauge_compatible(self, state: State) -> State:
        """Project Maxwell-Dirac initial data onto the gauge slice.

        The continuum gauge condition ties the scalar-potential velocity to
        the spatial divergence, d(A0)/dt = dx(A1); it is imposed on initial
        data only and tracked, not enforced, along the discrete flow.
        """
        if self.name != "maxwell_dirac":
            raise ValueError("gauge projection applies to maxwell_dirac only")
        out = state.copy()
        for i in (2, 3, 4, 5):
            out.data[i] = np.real(out.data[i])
        out.data[3] = self._spectral_dx(out.data[4])
        return out

    def gauge_residual(self, state: State) -> float:
        """L2 size of d(A0)/dt - dx(A1), zero on the gauge slice."""
        if self.name != "maxwell_dirac":
            raise ValueError("gauge residual applies to maxwell_dirac only")
        div = self._spectral_dx(state.data[4])
        return Field(self.grid, state.data[3] - div).norm()

    def _spectral_dx(self, values: np.ndarray) -> np.ndarray:
        # Nyquist-zeroed first derivative, so real fields stay real
        from .operators import _zeroed_nyquist_k

        k = _zeroed_nyquist_k(self.grid, 0) * np.ones(self.grid.shape)
        return self.grid.to_physical(1j * k * self.grid.to_spectral(values))

    # ---- random smooth states for verification --------------------------

    def random_smooth_state(self, rng: np.random.Generator,
                            radius: float = 1.0,
                            min_fraction: float = 0.2) -> State:
        """Draw a random state with spectral decay (1+|k|^2)^-(N+1).

        The decay keeps all graph norms up to order N finite and controlled;
        the state is rescaled to a uniform random H-norm in
        [min_fraction*radius, radius]. Sine-Gordon states are real-valued.
        """
        decay = (1.0 + self.grid.k_squared) ** (-(self.smoothness + 1))
        shape = (len(self.roles),) + self.grid.shape
        coeffs = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * decay
        st = State.from_spectral(self.grid, coeffs, self.roles)
        if self.name == "sine_gordon":
            st = State(self.grid, np.real(st.data).astype(complex), self.roles)
        n = self.norm(st)
        if n == 0:
            return st
        target = radius * rng.uniform(min_fraction, 1.0)
        return st * (target / n)


def build_model(name: str, grid: Grid, p: int = 3, sign: int = 1, g: float = 1.0,
                k0: float = 1.0, m: float = 1.0, smoothness: int | None = None,
                dealias: bool = True, potential_modes=None,
                break_j_hook: bool = False) -> Model:
    """Instantiate one of the five models on a grid.

    ``sign`` in {-1, 0, +1}: focusing/defocusing for power nonlinearities,
    0 disables J (linear model, used for harness calibration).
    """
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model '{name}', expected one of {MODEL_NAMES}")
    if p < 2:
        raise ValueError("power exponent p must be >= 2")
    if sign not in (-1, 0, 1):
        raise ValueError("sign must be -1, 0 or +1")
    if name == "maxwell_dirac" and grid.dim != 1:
        raise ValueError("maxwell_dirac uses the 1+1-dimensional reduction")
    if name == "nls" and grid.dim > 2:
        raise ValueError("nls is a 1d/2d (transverse-plane) model")

    params = ModelParams(p=int(p), sign=int(sign), g=float(g), k0=float(k0), m=float(m))
    if name == "nls":
        gen = make_operator("laplacian", grid).scaled(-1.0)
    elif name in ("klein_gordon", "sine_gordon"):
        gen = make_operator("wave_block", grid, k0=k0)
    elif name == "zakharov":
        gen = make_operator("zakharov_block", grid).scaled(-1.0)
    else:
        gen = make_operator("maxwell_dirac_block", grid, k0=k0, m=m)

    model = Model(
        name=name, grid=grid, generator=gen, roles=_ROLES[name], params=params,
        smoothness=_DEFAULT_SMOOTHNESS[name] if smoothness is None else int(smoothness),
        dealias=dealias, potential_modes=potential_modes, break_j_hook=break_j_hook,
    )
    # |grad| multiplier shared by the Zakharov source and diagnostics.
    model._absgrad = np.real(make_operator("abs_grad", grid).symbol[0, 0])
    return model


# ---------------------------------------------------------------------------
# Empirical verification of the nonlinearity estimates
# ---------------------------------------------------------------------------

@dataclass
class EstimateReport:
    """Outcome of sampling one nonlinearity inequality.

    ``fitted_constant`` is the smallest constant making the inequality hold
    on the sample. ``declared_constant`` is set only where the inequality
    comes with a pinned constant (the sine contraction, constant 1); in that
    case violations are counted against it with 1e-10 relative slack.
    Otherwise violations are counted against the fitted constant.
    """

    inequality_id: str
    sample_count: int
    violations: int
    fitted_constant: float
    declared_constant: float | None = None


@dataclass
class _Inequality:
    id: str
    pair: bool            # needs two sampled states
    lhs: callable
    core: callable
    envelope: callable    # monotone function of the indicated lower norms
    declared: float | None = None
    special_fit: callable | None = None  # for multi-term right-hand sides


def _inequality_suite(model: Model, j_max: int) -> list[_Inequality]:
    deg = _J_DEGREE[model.name](model.params.p)
    N = min(model.smoothness, j_max)
    suite: list[_Inequality] = []

    def norms(st, up_to):
        return model.graph_norms(st, up_to)

    for j in range(N + 1):
        # ||A^j J(phi)|| <= C(||phi||, ..., ||A^j phi||) ||A^j phi||
        suite.append(_Inequality(
            id=f"{model.name}:growth:j{j}", pair=False,
            lhs=lambda st, j=j: model.graph_norm(model.apply_J(st), j),
            core=lambda st, j=j: model.graph_norm(st, j),
            envelope=lambda st, j=j: (1.0 + float(np.max(norms(st, j)))) ** (deg - 1),
        ))
        # ||A^j (J(phi)-J(psi))|| <= C(norms of both) ||A^j(phi-psi)||
        suite.append(_Inequality(
            id=f"{model.name}:lipschitz:j{j}", pair=True,
            lhs=lambda a, b, j=j: model.graph_norm(model.apply_J(a) - model.apply_J(b), j),
            core=lambda a, b, j=j: model.graph_norm(a - b, j),
            envelope=lambda a, b, j=j: (1.0 + max(float(np.max(norms(a, j))),
                                                  float(np.max(norms(b, j))))) ** (deg - 1),
        ))
    for j in range(1, N + 1):
        # Stronger form with the envelope depending only on norms below j.
        suite.append(_Inequality(
            id=f"{model.name}:growth-lower:j{j}", pair=False,
            lhs=lambda st, j=j: model.graph_norm(model.apply_J(st), j),
            core=lambda st, j=j: model.graph_norm(st, j),
            envelope=lambda st, j=j: (1.0 + float(np.max(norms(st, j - 1)))) ** (deg - 1),
        ))

    if model.name == "klein_gordon" and model.params.p == 3:
        suite += [
            _Inequality(
                id="cubic:power", pair=False,
                lhs=lambda st: model.norm(model.apply_J(st)),
                core=lambda st: 1.0,
                envelope=lambda st: model.norm(st) ** 3,
            ),
            _Inequality(
                id="cubic:lipschitz", pair=True,
                lhs=lambda a, b: model.norm(model.apply_J(a) - model.apply_J(b)),
                core=lambda a, b: model.norm(a - b),
                envelope=lambda a, b: model.norm(a) ** 2 + model.norm(b) ** 2,
            ),
            _Inequality(
                id="cubic:grad-power", pair=False,
                lhs=lambda st: model.graph_norm(model.apply_J(st), 1),
                core=lambda st: model.graph_norm(st, 1),
                envelope=lambda st: model.norm(st) ** 2,
            ),
            _Inequality(
                id="cubic:grad-lipschitz", pair=True,
                lhs=lambda a, b: model.graph_norm(model.apply_J(a) - model.apply_J(b), 1),
                core=lambda a, b: model.graph_norm(a - b, 1),
                envelope=lambda a, b: (1.0 + max(model.norm(a), model.norm(b),
                                                 model.graph_norm(a, 1),
                                                 model.graph_norm(b, 1))) ** 2,
            ),
        ]

    if model.name == "sine_gordon":
        unit_bound_valid = model.params.g <= 1.0 and model.params.k0 >= 1.0

        def two_term_fit(a, b):
            # ||A(J(a)-J(b))|| <= K ||a-b|| ||A a|| + ||a-b||
            lhs = model.graph_norm(model.apply_J(a) - model.apply_J(b), 1)
            diff = model.norm(a - b)
            denom = diff * model.graph_norm(a, 1)
            excess = lhs - diff
            if denom <= 1e-300:
                return 0.0 if excess <= 0 else np.inf
            return max(excess, 0.0) / denom

        suite += [
            _Inequality(
                id="sine:contraction", pair=False,
                lhs=lambda st: model.norm(model.apply_J(st)),
                core=lambda st: model.norm(st),
                envelope=lambda st: 1.0,
                declared=1.0 if unit_bound_valid else None,
            ),
            _Inequality(
                id="sine:grad-bound", pair=False,
                lhs=lambda st: model.graph_norm(model.apply_J(st), 1),
                core=lambda st: model.norm(st),
                envelope=lambda st: 1.0,
            ),
            _Inequality(
                id="sine:lipschitz", pair=True,
                lhs=lambda a, b: model.norm(model.apply_J(a) - model.apply_J(b)),
                core=lambda a, b: model.norm(a - b),
                envelope=lambda a, b: 1.0,
            ),
            _Inequality(
                id="sine:grad-lipschitz", pair=True,
                lhs=lambda a, b: 0.0, core=lambda a, b: 1.0,
                envelope=lambda a, b: 1.0,
                special_fit=two_term_fit,
            ),
        ]
    return suite


def verify_estimates(model: Model, sample_count: int = 1000,
                     j_max: int | None = None, radius: float = 1.0,
                     seed: int = 0) -> list[EstimateReport]:
    """Sample the nonlinearity inequalities; reports, never raises.

    A violation is a sample whose left-hand side exceeds constant * envelope
    * core beyond 1e-10 relative slack, with the constant taken from the
    declared value when one exists and from the sample fit otherwise.
    """
    if sample_count < 100:
        raise ValueError("estimate verification needs at least 100 samples")
    j_max = model.smoothness if j_max is None else j_max
    rng = np.random.default_rng(seed)
    suite = _inequality_suite(model, j_max)
    singles = [model.random_smooth_state(rng, radius) for _ in range(sample_count)]
    pairs = [
        (model.random_smooth_state(rng, radius), model.random_smooth_state(rng, radius))
        for _ in range(sample_count)
    ]

    reports = []
    for ineq in suite:
        ratios = []
        for k in range(sample_count):
            args = pairs[k] if ineq.pair else (singles[k],)
            if ineq.special_fit is not None:
                ratios.append(ineq.special_fit(*args))
                continue
            lhs = ineq.lhs(*args)
            denom = ineq.envelope(*args) * ineq.core(*args)
            if denom <= 1e-300:
                ratios.append(0.0 if lhs <= 1e-300 else np.inf)
            else:
                ratios.append(lhs / denom)
        ratios = np.asarray(ratios)
        fitted = float(np.max(ratios)) if len(ratios) else 0.0
        bound = ineq.declared if ineq.declared is not None else fitted
        violations = int(np.sum(ratios > bound * (1.0 + 1e-10)))
        reports.append(EstimateReport(
            inequality_id=ineq.id, sample_count=sample_count,
            violations=violations, fitted_constant=fitted,
            declared_constant=ineq.declared,
        ))
    return reports


def apply_J(model: Model, state: State) -> State:
    return model.apply_J(state)


def conserved(model: Model, state: State) -> dict[str, float]:
    return model.conserved(state)
