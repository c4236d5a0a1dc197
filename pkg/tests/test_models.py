import numpy as np
import pytest

from stochwave import State, build_model, make_grid, verify_estimates
from stochwave.solver import solve_deterministic

GRID = make_grid(1, [32], [2 * np.pi])
ALL_NAMES = ("nls", "klein_gordon", "zakharov", "maxwell_dirac", "sine_gordon")


def _real_state(model, seed=0, radius=0.3):
    st = model.random_smooth_state(np.random.default_rng(seed), radius)
    if model.name in ("sine_gordon",):
        st = State(model.grid, np.real(st.data).astype(complex), model.roles)
    if model.name == "maxwell_dirac":
        for i in (2, 3, 4, 5):  # real potential sector
            st.data[i] = np.real(st.data[i])
    return st


def test_build_nls_paraxial():
    g2 = make_grid(2, [16, 16], [2 * np.pi, 2 * np.pi])
    m = build_model("nls", g2, p=3, sign=1)
    # generator is -Lap: symbol +|k|^2
    assert m.generator.symbol[0, 0, 0, 0] == pytest.approx(0.0)
    assert np.all(np.real(m.generator.symbol[0, 0]) >= -1e-14)
    assert m.roles == ("psi",)


def test_build_sine_gordon_two_component():
    m = build_model("sine_gordon", GRID, g=1.0, k0=1.0)
    assert m.roles == ("u", "u_t")
    st = State(GRID, np.full((2,) + GRID.shape, np.pi / 2, dtype=complex), m.roles)
    out = m.apply_J(st)
    assert np.allclose(out.data[0], 0.0, atol=1e-14)
    assert np.allclose(out.data[1], 1.0, atol=1e-14)


def test_build_zakharov_structure():
    m = build_model("zakharov", GRID)
    assert m.roles == ("psi", "v")
    # normalized coupling carries the phase factor making mass an invariant:
    # J = (-i psi Re v, i |grad| |psi|^2)
    rng = np.random.default_rng(1)
    st = m.random_smooth_state(rng, 0.5)
    out = m.apply_J(st)
    psi, v = st.data[0], st.data[1]
    expected0 = -1j * m._dealias(psi * np.real(v))
    assert np.allclose(out.data[0], expected0, atol=1e-13)
    # density source is i times a real field
    assert np.max(np.abs(out.data[1] + np.conj(out.data[1]))) < 1e-12


def test_nls_cubic_amplitude():
    m = build_model("nls", GRID, p=3, sign=-1)
    st = State(GRID, np.full((1,) + GRID.shape, 2.0, dtype=complex), m.roles)
    out = m.apply_J(st)
    # |2|^2 * 2 = 8 with the documented i phase from the normalization
    assert np.allclose(out.data[0], -8j, atol=1e-12)


@pytest.mark.parametrize("name", ALL_NAMES)
def test_J_of_zero_is_zero(name):
    m = build_model(name, GRID, p=3, sign=1, k0=1.0, m=1.0)
    out = m.apply_J(m.zero_state())
    assert np.max(np.abs(out.data)) == 0.0


def test_build_model_rejects_bad_input():
    with pytest.raises(ValueError):
        build_model("airy", GRID)
    with pytest.raises(ValueError):
        build_model("nls", GRID, p=1)
    with pytest.raises(ValueError):
        build_model("nls", GRID, sign=2)
    g3 = make_grid(3, [4, 4, 4], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        build_model("maxwell_dirac", g3)


def test_conserved_values():
    m = build_model("nls", GRID, p=3, sign=1)
    st = m.random_smooth_state(np.random.default_rng(0), 1.0)
    st = st * (1.0 / m.norm(st))
    assert m.conserved(st)["mass"] == pytest.approx(1.0, rel=1e-12)

    sg = build_model("sine_gordon", GRID, g=1.0, k0=1.0)
    zero = sg.zero_state()
    assert sg.conserved(zero)["energy"] == pytest.approx(GRID.volume)


def test_klein_gordon_energy_constant_on_linear_flow():
    # single spectral mode, sign 0: closed-form per-mode rotation keeps energy
    m = build_model("klein_gordon", GRID, p=3, sign=0, k0=1.0)
    x = GRID.x_axes[0]
    st = State(GRID, np.zeros((2,) + GRID.shape, dtype=complex), m.roles)
    st.data[0] = 0.5 * np.exp(2j * x)
    e0 = m.conserved(st)["energy"]
    b = np.sqrt(4.0 + 1.0)
    for t in (0.3, 0.9, 2.2):
        moved = m.generator.propagate(t, st)
        # oracle: (psi, v) -> (cos(tb) psi, -b sin(tb) psi) for v0 = 0
        assert np.allclose(moved.data[0], np.cos(t * b) * st.data[0], atol=1e-12)
        assert m.conserved(moved)["energy"] == pytest.approx(e0, rel=1e-12)


@pytest.mark.parametrize("name", ("nls", "klein_gordon", "sine_gordon"))
def test_J_commutes_with_translation(name):
    m = build_model(name, GRID, p=3, sign=1, k0=1.0)
    st = _real_state(m, seed=4)
    shift = 5
    rolled = State(GRID, np.roll(st.data, shift, axis=-1), m.roles)
    j_then_roll = np.roll(m.apply_J(st).data, shift, axis=-1)
    roll_then_j = m.apply_J(rolled).data
    assert np.max(np.abs(j_then_roll - roll_then_j)) < 1e-12


def test_maxwell_dirac_charge_conserved():
    m = build_model("maxwell_dirac", GRID, k0=1.0, m=1.0)
    st = _real_state(m, seed=7, radius=0.4)
    q0 = m.conserved(st)["charge"]
    traj = solve_deterministic(m, st, 1.0, 1e-3, scheme="strang", record_every=500)
    qT = m.conserved(traj.final_state())["charge"]
    assert abs(qT - q0) / q0 < 1e-6


def test_maxwell_dirac_gauge_projection_and_residual():
    m = build_model("maxwell_dirac", GRID, k0=1.0, m=1.0)
    st = _real_state(m, seed=8, radius=0.4)
    assert m.gauge_residual(st) > 1e-6  # random data is off the gauge slice
    fixed = m.make_gauge_compatible(st)
    assert m.gauge_residual(fixed) < 1e-12
    # the residual is a diagnostic, not enforced: it stays bounded but moves
    traj = solve_deterministic(m, fixed, 0.2, 1e-3, scheme="strang", record_every=50)
    residuals = [m.gauge_residual(s) for s in traj.states]
    assert all(np.isfinite(r) for r in residuals)
    nls = build_model("nls", GRID, p=3, sign=1)
    with pytest.raises(ValueError):
        nls.gauge_residual(nls.zero_state())


@pytest.mark.parametrize("name,invariant", [
    ("nls", "mass"), ("zakharov", "mass"), ("maxwell_dirac", "charge"),
])
def test_exact_invariants_under_strang(name, invariant):
    m = build_model(name, GRID, p=3, sign=1, k0=1.0, m=1.0)
    st = _real_state(m, seed=2, radius=0.4)
    c0 = m.conserved(st)[invariant]
    traj = solve_deterministic(m, st, 0.5, 2e-3, scheme="strang", record_every=125)
    for s in traj.states:
        assert abs(m.conserved(s)[invariant] - c0) / abs(c0) < 1e-10


@pytest.mark.parametrize("name,sign", [
    ("klein_gordon", -1), ("sine_gordon", 1), ("nls", 1),
])
def test_energy_drift_second_order(name, sign):
    m = build_model(name, GRID, p=3, sign=sign, g=1.0, k0=1.0)
    st = _real_state(m, seed=3, radius=0.4)
    e0 = m.conserved(st)["energy"]
    drifts = []
    for dt in (8e-3, 4e-3, 2e-3):
        traj = solve_deterministic(m, st, 0.48, dt, scheme="strang", record_every=24)
        drifts.append(max(abs(m.conserved(s)["energy"] - e0) for s in traj.states)
                      / abs(e0))
    slopes = [np.log2(drifts[i] / drifts[i + 1]) for i in range(len(drifts) - 1)]
    assert min(slopes) >= 1.8


def test_estimates_sine_gordon_unit_constant():
    m = build_model("sine_gordon", GRID, g=1.0, k0=1.0)
    reports = {r.inequality_id: r for r in verify_estimates(m, sample_count=300, seed=1)}
    contraction = reports["sine:contraction"]
    assert contraction.declared_constant == 1.0
    assert contraction.violations == 0
    assert contraction.fitted_constant <= 1 + 1e-12


def test_estimates_klein_gordon_cubic():
    m = build_model("klein_gordon", GRID, p=3, sign=1, k0=1.0)
    reports = {r.inequality_id: r for r in verify_estimates(m, sample_count=300, seed=2)}
    for key in ("cubic:power", "cubic:lipschitz", "cubic:grad-power", "cubic:grad-lipschitz"):
        assert reports[key].violations == 0
        assert np.isfinite(reports[key].fitted_constant)


def test_estimates_zero_radius_trivial():
    m = build_model("nls", GRID, p=3, sign=1)
    reports = verify_estimates(m, sample_count=120, radius=1e-12, seed=3)
    assert all(r.violations == 0 for r in reports)


def test_verify_estimates_enforces_sample_floor():
    m = build_model("nls", GRID, p=3, sign=1)
    with pytest.raises(ValueError):
        verify_estimates(m, sample_count=50)


def test_lipschitz_constant_tracks_power_envelope():
    # raw Lipschitz ratios grow with radius no faster than the declared power
    m = build_model("klein_gordon", GRID, p=3, sign=1, k0=1.0)
    rng = np.random.default_rng(9)
    ratios = {}
    for radius in (0.5, 1.0, 2.0):
        worst = 0.0
        for _ in range(60):
            a = m.random_smooth_state(rng, radius)
            b = m.random_smooth_state(rng, radius)
            diff = m.norm(a - b)
            if diff > 1e-12:
                worst = max(worst, m.norm(m.apply_J(a) - m.apply_J(b)) / diff)
        ratios[radius] = worst
    # the cubic's local Lipschitz constant scales like the squared radius
    normalized = [ratios[r] / r**2 for r in (0.5, 1.0, 2.0)]
    assert max(normalized) / min(normalized) < 3.0


def test_break_j_hook_violates_estimates():
    m = build_model("sine_gordon", GRID, g=1.0, k0=1.0, break_j_hook=True)
    reports = {r.inequality_id: r for r in verify_estimates(m, sample_count=100, seed=4)}
    assert reports["sine:contraction"].violations > 0
