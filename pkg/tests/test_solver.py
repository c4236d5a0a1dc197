import numpy as np
import pytest

from stochwave import (CovarianceSpec, Field, QWienerSampler, State,
                       ThetaPotential, build_model, default_covariance,
                       holomorphy_check, make_grid, picard_solve,
                       solve_deterministic, solve_ito, step_exp_euler,
                       step_strang)

GRID = make_grid(1, [32], [2 * np.pi])


def _sine_gordon_setup(radius=0.3, seed=2):
    m = build_model("sine_gordon", GRID, g=1.0, k0=1.0)
    st = m.random_smooth_state(np.random.default_rng(seed), radius)
    st = State(GRID, np.real(st.data).astype(complex), m.roles)
    cov = default_covariance(GRID, n_modes=3, lambda0=0.5, gamma=2.0)
    theta = ThetaPotential([Field(GRID, np.sqrt(l) * e.values)
                            for l, e in zip(cov.eigenvalues, cov.eigenfields)])
    return m, st, theta


def test_theta_affine_in_z():
    _, _, theta = _sine_gordon_setup()
    zeta = np.array([0.3, -0.1, 0.2])
    eta = np.array([0.1, 0.4, -0.3])
    z = 0.7 - 0.2j
    combined = theta.field_values(zeta, eta, z)
    split = theta.field_values(zeta) + z * theta.field_values(eta)
    assert np.max(np.abs(combined - split)) < 1e-14
    assert np.all(np.isfinite(combined))


def test_picard_homogeneous_single_sweep():
    m = build_model("nls", GRID, sign=0)
    st = m.random_smooth_state(np.random.default_rng(1), 0.5)
    res = picard_solve(m, st, 0.5, None, n_time_nodes=33, tol=1e-12)
    assert res.converged and len(res.residuals) == 1
    free = m.generator.propagate(0.5, st)
    assert m.norm(res.final_state() - free) < 1e-13


def test_picard_constant_potential_closed_form():
    # J = 0, Theta = c real constant, single mode a: phi(t) = e^{(-ia+c)t} phi0
    m = build_model("nls", GRID, sign=0, smoothness=1)
    c = 0.4
    theta = ThetaPotential([Field(GRID, np.ones(GRID.shape))])
    x = GRID.x_axes[0]
    phi0 = State(GRID, np.exp(1j * x)[None, :], m.roles)
    T = 0.5
    res = picard_solve(m, phi0, T, theta, np.array([c]), n_time_nodes=129, tol=1e-13,
                       max_iter=100)
    ref = phi0 * np.exp((-1j + c) * T)  # generator eigenvalue a = 1 at k = 1
    err = m.norm(res.final_state() - ref) / m.norm(ref)
    assert res.converged
    assert err < 5e-5  # trapezoid quadrature, O(dt^2)
    res2 = picard_solve(m, phi0, T, theta, np.array([c]), n_time_nodes=257, tol=1e-13,
                        max_iter=100)
    err2 = m.norm(res2.final_state() - ref) / m.norm(ref)
    assert err / err2 > 3.0  # halving dt cuts the error about 4x


def test_picard_contraction_ratio_scales_with_horizon():
    m, st, theta = _sine_gordon_setup()
    zeta = np.array([0.4, -0.2, 0.3])
    res_full = picard_solve(m, st, 0.5, theta, zeta, n_time_nodes=65, tol=1e-11)
    res_half = picard_solve(m, st, 0.25, theta, zeta, n_time_nodes=33, tol=1e-11)
    assert res_full.converged and res_half.converged
    assert res_full.contraction_ratio < 1.0
    ratio = res_half.contraction_ratio / res_full.contraction_ratio
    assert 0.35 < ratio < 0.65
    # residual history decreases and the fixed point is tight
    assert all(np.diff(res_full.residuals) < 0)
    assert res_full.fixed_point_residual <= 2e-11


def test_picard_reports_non_convergence():
    m, st, theta = _sine_gordon_setup(radius=0.5)
    zeta = np.array([0.5, 0.5, 0.5])
    res = picard_solve(m, st, 0.5, theta, zeta, n_time_nodes=33, tol=1e-14,
                       max_iter=2)
    assert not res.converged
    assert len(res.residuals) == 2  # history returned even without convergence


def test_picard_blowup_guard():
    from stochwave import BlowUpError

    # strongly focusing cubic on large data blows past the safety cap
    m = build_model("nls", GRID, p=3, sign=1, dealias=False)
    st = m.random_smooth_state(np.random.default_rng(0), 0.5) * 1e7
    with pytest.raises(BlowUpError):
        picard_solve(m, st, 1.0, None, n_time_nodes=9, tol=1e-10, max_iter=40)


def test_step_exp_euler_flags_nonfinite():
    from stochwave import BlowUpError

    m = build_model("nls", GRID, p=3, sign=1)
    bad = m.zero_state()
    bad.data[0, 0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(BlowUpError):
        step_exp_euler(m, bad, 0.01)


def test_step_exp_euler_exact_linear():
    m = build_model("nls", GRID, sign=0)
    st = m.random_smooth_state(np.random.default_rng(3), 0.5)
    stepped = step_exp_euler(m, st, 0.1)
    exact = m.generator.propagate(0.1, st)
    assert m.norm(stepped - exact) < 1e-13


def test_step_exp_euler_gbm_reduction():
    # zero generator mode: psi -> psi (1 + dW), plain multiplicative Euler
    g = make_grid(1, [8], [1.0])
    m = build_model("nls", g, sign=0, smoothness=1)
    st = State(g, np.full((1,) + g.shape, 1.0 + 0.5j), m.roles)
    dW = Field(g, np.full(g.shape, 0.03))
    out = step_exp_euler(m, st, 0.01, dW)
    assert np.allclose(out.data, st.data * 1.03, atol=1e-14)


def test_step_exp_euler_vs_strang_one_step():
    m = build_model("nls", GRID, p=3, sign=1)
    x = GRID.x_axes[0]
    st = State(GRID, (0.5 * np.exp(1j * x))[None, :], m.roles)
    diffs = []
    for dt in (2e-2, 1e-2, 5e-3):
        a = step_exp_euler(m, st, dt)
        b = step_strang(m, st, dt)
        diffs.append(m.norm(a - b))
    orders = [np.log2(diffs[i] / diffs[i + 1]) for i in range(2)]
    assert min(orders) > 1.8  # single-step difference O(dt^2)


def test_picard_matches_marching_at_order_one():
    m, st, _ = _sine_gordon_setup(radius=0.25, seed=5)
    T = 0.5
    sups = []
    dts = (1 / 20, 1 / 40, 1 / 80)
    for dt in dts:
        n = round(T / dt)
        res = picard_solve(m, st, T, None, n_time_nodes=n + 1, tol=1e-12, max_iter=80)
        state = st
        worst = 0.0
        for i in range(n):
            state = step_exp_euler(m, state, dt)
            worst = max(worst, m.norm(state - res.states[i + 1]))
        sups.append(worst)
    order = np.polyfit(np.log(dts), np.log(sups), 1)[0]
    assert order >= 0.9


def test_solve_ito_linear_no_noise():
    m = build_model("nls", GRID, sign=0, smoothness=1)
    st = m.random_smooth_state(np.random.default_rng(1), 0.5)
    traj = solve_ito(m, st, 0.5, 0.01, None, threshold=1e6)
    assert traj.stop_time is None and not traj.blown_up
    assert np.max(np.abs(traj.graph_norms - traj.graph_norms[0])) < 1e-12


def test_solve_ito_norm_history_matches_states():
    m, st, _ = _sine_gordon_setup(radius=0.3, seed=6)
    cov = default_covariance(GRID, n_modes=2, lambda0=0.2, gamma=2.0)
    traj = solve_ito(m, st, 0.2, 0.01, QWienerSampler(cov, 5, 0), record_every=5)
    for i in range(len(traj.times)):
        recomputed = m.graph_norms(traj.states[i])
        assert np.max(np.abs(recomputed - traj.graph_norms[i])) < 1e-10


def test_solve_ito_validates_threshold():
    m = build_model("nls", GRID, sign=0, smoothness=1)
    st = m.random_smooth_state(np.random.default_rng(1), 0.5)
    with pytest.raises(ValueError):
        solve_ito(m, st, 0.5, 0.01, None, threshold=0.1 * m.norm(st))


def test_tight_threshold_stops_with_strong_noise():
    g = make_grid(1, [8], [1.0])
    m = build_model("nls", g, sign=0, smoothness=1)
    spec = CovarianceSpec(np.array([4.0]), [Field(g, np.ones(g.shape))])
    x = g.x_axes[0]
    phi0 = State(g, np.exp(2j * np.pi * x)[None, :], m.roles)
    threshold = m.norm(phi0) * 1.0001
    stopped = 0
    for i in range(100):
        traj = solve_ito(m, phi0, 1.0, 1e-3, QWienerSampler(spec, 17, i),
                         threshold=threshold, record_every=1000)
        stopped += traj.stopped
    # continuum crossing is almost sure; discrete sampling misses the paths
    # whose partial sums stay strictly below the hairline margin
    assert stopped >= 95


def test_stop_time_monotone_in_threshold():
    g = make_grid(1, [8], [1.0])
    m = build_model("nls", g, sign=0, smoothness=1)
    spec = CovarianceSpec(np.array([2.0]), [Field(g, np.ones(g.shape))])
    x = g.x_axes[0]
    phi0 = State(g, np.exp(2j * np.pi * x)[None, :], m.roles)
    n0 = m.norm(phi0)
    for stream in range(10):
        previous = -np.inf
        for factor in (1.05, 1.2, 1.5, 2.5):
            traj = solve_ito(m, phi0, 1.0, 1e-2, QWienerSampler(spec, 23, stream),
                             threshold=n0 * factor, record_every=100)
            tau = np.inf if traj.stop_time is None else traj.stop_time
            assert tau >= previous
            previous = tau


def test_ito_mean_square_continuity():
    # E||phi(t+d) - phi(t)||^2 decays linearly in d. The zero mode isolates
    # the stochastic modulus (no free-phase rotation mixed in).
    g = make_grid(1, [8], [1.0])
    m = build_model("nls", g, sign=0, smoothness=1)
    spec = CovarianceSpec(np.array([0.5]), [Field(g, np.ones(g.shape))])
    phi0 = State(g, np.ones((1,) + g.shape, dtype=complex), m.roles)
    dt = 1 / 64
    step_marks = (1, 2, 4, 8)
    deltas = np.array(step_marks) * dt
    gaps = np.zeros(len(deltas))
    n_paths = 400
    base_steps = 16
    for i in range(n_paths):
        sampler = QWienerSampler(spec, 31, i)
        incs = sampler.increments(dt, base_steps + max(step_marks))
        state = phi0
        for n in range(base_steps):
            state = step_exp_euler(m, state, dt, incs[n])
        anchor = state
        moving = anchor
        for k in range(max(step_marks)):
            moving = step_exp_euler(m, moving, dt, incs[base_steps + k])
            if (k + 1) in step_marks:
                gaps[step_marks.index(k + 1)] += m.norm(moving - anchor) ** 2
    gaps /= n_paths
    slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
    assert 0.8 < slope < 1.2


def test_gronwall_graph_norm_growth():
    # fit the growth constant once, then fresh data stays inside the envelope
    m, _, theta = _sine_gordon_setup()
    zeta = np.array([0.3, 0.2, -0.1])
    rng = np.random.default_rng(77)
    T = 0.5

    def growth_rate(state):
        res = picard_solve(m, state, T, theta, zeta, n_time_nodes=33, tol=1e-10)
        s0 = m.sum_graph_norms(state)
        rates = []
        for t, s in zip(res.times[1:], res.states[1:]):
            rates.append(np.log(max(m.sum_graph_norms(s) / s0, 1e-300)) / t)
        return max(rates)

    calibration = max(growth_rate(State(GRID, np.real(
        m.random_smooth_state(rng, 0.3).data).astype(complex), m.roles))
        for _ in range(5))
    c1 = max(calibration, 0.0) * 1.5 + 0.1
    for _ in range(50):
        st = State(GRID, np.real(m.random_smooth_state(rng, 0.3).data).astype(complex),
                   m.roles)
        assert growth_rate(st) <= c1


def test_holomorphy_theta_independent_of_z():
    m, st, _ = _sine_gordon_setup()
    zero_theta = ThetaPotential([Field(GRID, np.zeros(GRID.shape))])
    probe = st * (1.0 / m.norm(st))
    res = holomorphy_check(m, st, 0.3, zero_theta, np.array([0.0]), np.array([0.0]),
                           [0.1 + 0.1j], probe, spacing=1e-2, n_time_nodes=31,
                           tol=1e-13)
    assert res < 1e-12


def test_holomorphy_affine_single_mode():
    m = build_model("nls", GRID, sign=0, smoothness=1)
    theta = ThetaPotential([Field(GRID, np.ones(GRID.shape))])
    x = GRID.x_axes[0]
    phi0 = State(GRID, np.exp(1j * x)[None, :], m.roles)
    probe = phi0 * (1.0 / m.norm(phi0))
    res = holomorphy_check(m, phi0, 0.5, theta, np.array([0.3]), np.array([2.0]),
                           [0.25], probe, spacing=1e-2, n_time_nodes=65, tol=1e-13)
    assert res < 1e-8  # entire exponential in z


def test_export_trajectory_csv(tmp_path):
    m, st, _ = _sine_gordon_setup()
    traj = solve_deterministic(m, st, 0.1, 0.01, record_every=2)
    from stochwave.solver import export_trajectory_csv

    path = tmp_path / "trajectory.csv"
    export_trajectory_csv(m, traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("time,graph_norm_j0")
    assert "energy" in lines[0]
    assert len(lines) == len(traj.times) + 1
