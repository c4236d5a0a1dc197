import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from stochwave import State, make_grid, make_operator
from stochwave.operators import apply, graph_norm, propagate


@pytest.fixture(scope="module")
def grid():
    return make_grid(1, [16], [2 * np.pi])


def _random_state(grid, s, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((s,) + grid.shape) + 1j * rng.standard_normal((s,) + grid.shape)
    return State(grid, data, tuple(f"c{i}" for i in range(s)))


def _mode_state(grid, wave, component=0, s=1):
    x = grid.x_axes[0]
    st_ = State(grid, np.zeros((s,) + grid.shape, dtype=complex),
                tuple(f"c{i}" for i in range(s)))
    st_.data[component] = np.exp(1j * wave * x)
    return st_


def test_symbol_values(grid):
    lap = make_operator("laplacian", grid)
    k = grid.k_axes[0]
    i2 = np.argmin(np.abs(k - 2.0))
    assert lap.symbol[0, 0, i2] == pytest.approx(-4.0)
    shifted = make_operator("shifted_sqrt", grid, k0=1.0)
    assert shifted.symbol[0, 0, 0] == pytest.approx(1.0)  # k = 0


def test_dirac_eigenvalues_at_zero_mode(grid):
    dirac = make_operator("dirac_1d", grid, m=1.0)
    eig = np.linalg.eigvalsh(dirac.symbol[:, :, 0])
    assert eig == pytest.approx([-1.0, 1.0])


def test_make_operator_rejects_unknown_and_missing(grid):
    with pytest.raises(ValueError):
        make_operator("spin_flip", grid)
    with pytest.raises(ValueError):
        make_operator("shifted_sqrt", grid)  # k0 missing
    with pytest.raises(ValueError):
        make_operator("wave_block", grid, k0=0.0)  # degenerate metric


def test_apply_laplacian_plane_wave(grid):
    lap = make_operator("laplacian", grid)
    st_ = _mode_state(grid, 1)
    out = apply(lap, st_)
    assert np.allclose(out.data, -st_.data, atol=1e-13)


def test_apply_identity_and_b_squared(grid):
    ident = make_operator("identity", grid)
    st_ = _random_state(grid, 1, seed=1)
    assert np.allclose(apply(ident, st_).data, st_.data, atol=1e-13)
    B = make_operator("shifted_sqrt", grid, k0=2.0)
    const = State(grid, np.full((1,) + grid.shape, 1.5 + 0.5j), ("c0",))
    twice = apply(B, apply(B, const))
    assert np.allclose(twice.data, 4.0 * const.data, atol=1e-12)


def test_free_schrodinger_phase(grid):
    # generator A = -Lap, so the k = 1 multiplier is exp(-i t)
    neg_lap = make_operator("laplacian", grid).scaled(-1.0)
    st_ = _mode_state(grid, 1)
    out = propagate(neg_lap, 0.5, st_)
    assert np.allclose(out.data, np.exp(-0.5j) * st_.data, atol=1e-13)


def test_propagate_t_zero_identity(grid):
    wave = make_operator("wave_block", grid, k0=1.0)
    st_ = _random_state(grid, 2, seed=2)
    assert np.allclose(propagate(wave, 0.0, st_).data, st_.data, atol=1e-13)


def test_wave_zero_mode_rotation(grid):
    # k = 0, k0 = 1: (1, 0) -> (cos t, -sin t)
    wave = make_operator("wave_block", grid, k0=1.0)
    st_ = State(grid, np.zeros((2,) + grid.shape, dtype=complex), ("u", "v"))
    st_.data[0] = 1.0
    t = 0.73
    out = propagate(wave, t, st_)
    assert np.allclose(out.data[0], np.cos(t), atol=1e-12)
    assert np.allclose(out.data[1], -np.sin(t), atol=1e-12)


def test_wave_propagator_closed_form(grid):
    wave = make_operator("wave_block", grid, k0=1.3)
    t = 0.41
    P = wave.propagator_matrices(t)
    k = grid.k_axes[0]
    for i in range(grid.size):
        b = np.sqrt(k[i] ** 2 + 1.3**2)
        closed = np.array([[np.cos(t * b), np.sin(t * b) / b],
                           [-b * np.sin(t * b), np.cos(t * b)]])
        assert np.max(np.abs(P[i] - closed)) < 1e-12
        oracle = expm(-1j * t * wave.symbol[:, :, i])
        assert np.max(np.abs(P[i] - oracle)) < 1e-12


def test_dirac_dispersion_eigenphases(grid):
    m = 0.7
    dirac = make_operator("dirac_1d", grid, m=m)
    t = 0.9
    P = dirac.propagator_matrices(t)
    k = dirac.symbol[0, 1].real.ravel()  # Nyquist-zeroed momenta
    for i in range(grid.size):
        om = np.sqrt(k[i] ** 2 + m**2)
        expected = np.array([np.exp(-1j * om * t), np.exp(1j * om * t)])
        got = np.linalg.eigvals(P[i])
        direct = max(abs(got[0] - expected[0]), abs(got[1] - expected[1]))
        swapped = max(abs(got[0] - expected[1]), abs(got[1] - expected[0]))
        assert min(direct, swapped) < 1e-12


def test_propagate_requires_hermitian(grid):
    sym = np.zeros((1, 1) + grid.shape, dtype=complex)
    sym[0, 0] = 1j * (1 + grid.k_squared)  # anti-Hermitian
    from stochwave.operators import SpectralOperator

    op = SpectralOperator(grid, sym)
    assert not op.hermitian
    with pytest.raises(ValueError):
        propagate(op, 0.1, _random_state(grid, 1))


def test_shape_mismatch_rejected(grid):
    lap = make_operator("laplacian", grid)
    with pytest.raises(ValueError):
        apply(lap, _random_state(grid, 2))


@pytest.mark.parametrize("kind,params,s", [
    ("laplacian", {}, 1),
    ("shifted_sqrt", {"k0": 1.0}, 1),
    ("abs_grad", {}, 1),
    ("wave_block", {"k0": 1.0}, 2),
    ("dirac_1d", {"m": 0.5}, 2),
    ("zakharov_block", {}, 2),
    ("maxwell_dirac_block", {"k0": 1.0, "m": 1.0}, 6),
])
def test_unitarity_and_group_law(grid, kind, params, s):
    op = make_operator(kind, grid, **params)
    assert op.hermitian
    rng = np.random.default_rng(5)
    for seed in range(5):
        st_ = _random_state(grid, s, seed=seed)
        t1, t2 = rng.uniform(-5, 5, size=2)
        n0 = op.metric_norm(st_)
        moved = propagate(op, t1, st_)
        assert abs(op.metric_norm(moved) / n0 - 1) < 1e-12
        twice = propagate(op, t2, moved)
        direct = propagate(op, t1 + t2, st_)
        assert op.metric_norm(twice - direct) < 1e-12 * n0


def test_graph_norm_values(grid):
    neg_lap = make_operator("laplacian", grid).scaled(-1.0)
    st_ = _mode_state(grid, 2)
    st_ = st_ * (1.0 / neg_lap.metric_norm(st_))
    assert graph_norm(neg_lap, st_, 0) == pytest.approx(1.0, rel=1e-12)
    assert graph_norm(neg_lap, st_, 1) == pytest.approx(4.0, rel=1e-12)
    assert graph_norm(neg_lap, st_, 2) == pytest.approx(16.0, rel=1e-12)
    with pytest.raises(ValueError):
        graph_norm(neg_lap, st_, -1)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=0, max_value=2))
def test_graph_norm_monotone_under_truncation(seed, j):
    grid = make_grid(1, [16], [2 * np.pi])
    op = make_operator("laplacian", grid).scaled(-1.0)
    st_ = _random_state(grid, 1, seed=seed)
    full = graph_norm(op, st_, j)
    coeffs = st_.spectral()
    keep = np.abs(grid.k_axes[0]) <= 2.0
    truncated = State.from_spectral(grid, coeffs * keep, st_.roles)
    assert graph_norm(op, truncated, j) <= full + 1e-12


def test_metric_hermiticity_flag_tolerance(grid):
    wave = make_operator("wave_block", grid, k0=1.0)
    g = wave._flat_metric()
    S = wave._flat_symbol()
    GS = g[:, None, :] * S
    dev = np.max(np.abs(GS - np.conj(np.transpose(GS, (1, 0, 2)))))
    assert dev < 1e-13 * (1 + np.max(np.abs(GS)))
