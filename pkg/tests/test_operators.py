import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridqvi import library
from hybridqvi.grid import ValueField, build_grid
from hybridqvi.model import HybridState
from hybridqvi.operators import (
    ATAG,
    CTAG,
    FREE,
    Discretization,
    GrowthTransform,
    M_op,
    N_op,
    OperatorError,
    continuation_update,
    destination_nodes,
    from_bounded,
    hamiltonian_stationary,
    hamiltonian_time,
    tag_nodes,
    to_bounded,
)
from hybridqvi.stationary import default_dt, sweep_with_policy


@pytest.fixture(scope="module")
def sw():
    m = library.switching()
    g = build_grid(m, 0.1)
    return m, g, Discretization(m, g, default_dt(m, g))


def test_tags_and_destinations(sw):
    m, g, disc = sw
    x = g.nodes(0)[:, 0]
    tags = tag_nodes(m, g)
    assert np.all(tags[np.abs(x) >= 2.5 - 1e-12] == ATAG)
    assert np.all(tags[np.abs(x) <= 0.5 + 1e-12] == CTAG)
    assert np.all(tags[(np.abs(x) > 0.5 + 1e-9) & (np.abs(x) < 2.5 - 1e-9)] == FREE)
    d = destination_nodes(m, g)
    assert set(np.round(x[d], 9)) >= {1.3, 1.4, 1.5, 1.6, 1.7}
    assert np.all(np.abs(x[d] - 1.5) - 0.25 <= 0.05 + 1e-9)


def test_M_op_conveyor(conveyor):
    g = build_grid(conveyor, 0.1)
    V = ValueField(g, g.nodes(0)[:, 0] ** 2)
    val, k = M_op(V, HybridState(0, [2.0]), conveyor)
    assert val == pytest.approx(0.25 + 1.0) and k == 0
    with pytest.raises(OperatorError):
        M_op(V, HybridState(0, [1.0]), conveyor)


def test_N_op_picks_cheapest_destination(sw):
    m, g, disc = sw
    vals = np.zeros(g.size)
    x = g.nodes(0)[:, 0]
    vals[disc.D_idx] = 0.5
    vals[disc.D_idx[np.argmin(np.abs(x[disc.D_idx] - 1.4))]] = 0.1
    V = ValueField(g, vals)
    val, node = N_op(V, HybridState(0, [0.0]), m, disc.D_idx)
    x_dest = g.node_state(node).coords[0]
    assert x_dest == pytest.approx(1.4)
    assert val == pytest.approx(0.1 + 0.5 + 0.1 * 1.4)
    with pytest.raises(OperatorError):
        N_op(V, HybridState(0, [1.0]), m)


def test_hamiltonians(sw):
    m = sw[0]
    x = HybridState(0, [2.0])
    # f = (1 + u/2) * 2, K = 0.2 + 0.1 u^2; sup over u of -K - f p
    p = np.array([1.0])
    want = max(-(0.2 + 0.1 * u * u) - (1 + 0.5 * u) * 2.0 * 1.0 for u in (-1, 0, 1))
    assert hamiltonian_time(0.0, x, p, m) == pytest.approx(want)
    assert hamiltonian_stationary(x, p, m) == pytest.approx(want / m.constants.lam)
    with pytest.raises(OperatorError):
        hamiltonian_stationary(x, np.zeros(2), m)


@given(st.integers(0, 10_000))
def test_sweep_is_monotone(sw, seed):
    m, g, disc = sw
    r = np.random.default_rng(seed)
    V1 = r.uniform(0, 3, g.size)
    V2 = V1 + np.abs(r.normal(size=g.size)) * (r.uniform(size=g.size) < 0.3)
    S1 = sweep_with_policy(disc, V1)[0]
    S2 = sweep_with_policy(disc, V2)[0]
    assert np.all(S2 >= S1 - 1e-14)


@given(st.floats(-3, 3), st.integers(0, 1000))
def test_constant_shift_laws(sw, c, seed):
    m, g, disc = sw
    V = np.random.default_rng(seed).uniform(0, 3, g.size)
    q = disc.disc
    assert np.allclose(disc.continuation(V + c)[0], disc.continuation(V)[0] + q * c, atol=1e-12)
    assert np.allclose(disc.M(V + c)[0], disc.M(V)[0] + c, atol=1e-12)
    assert np.allclose(disc.N(V + c)[0], disc.N(V)[0] + c, atol=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-2.9, 2.9))
def test_hamiltonian_convex_in_p(sw, p1, p2, x):
    m = sw[0]
    s = HybridState(0, [x])
    mid = hamiltonian_stationary(s, np.array([(p1 + p2) / 2]), m)
    assert mid <= 0.5 * (hamiltonian_stationary(s, np.array([p1]), m) + hamiltonian_stationary(s, np.array([p2]), m)) + 1e-12


def test_pointwise_and_tables_agree(sw, rng):
    m, g, disc = sw
    V = ValueField(g, rng.uniform(0, 2, g.size))
    cont, _ = disc.continuation(V.values)
    for node in rng.choice(g.size, 15, replace=False):
        assert continuation_update(V, g.node_state(int(node)), m, disc.dt)[0] == pytest.approx(cont[node], abs=1e-13)
    mv, _ = disc.M(V.values)
    for r, node in enumerate(disc.A_idx):
        assert M_op(V, g.node_state(int(node)), m)[0] == pytest.approx(mv[r], abs=1e-13)
    nv, _ = disc.N(V.values)
    for r, node in enumerate(disc.C_idx):
        assert N_op(V, g.node_state(int(node)), m, disc.D_idx)[0] == pytest.approx(nv[r], abs=1e-13)


def test_time_form_has_no_discount(conveyor):
    g = build_grid(conveyor, 0.1)
    disc = Discretization(conveyor, g, 0.05, t=0.0)
    assert disc.disc == 1.0
    V = ValueField(g, np.ones(g.size))
    assert continuation_update(V, HybridState(0, [1.0]), conveyor, 0.05, t=0.0)[0] == pytest.approx(1.0)
    assert continuation_update(V, HybridState(0, [1.0]), conveyor, 0.05)[0] == pytest.approx(np.exp(-0.05))


class TestGrowthTransform:
    tr = GrowthTransform(eta=0.25, R=1.0, lam=1.0, F=1.0)

    def test_cutoff_properties(self):
        r = np.linspace(0, 6, 601)
        xi = self.tr.xi_radial(r)
        assert np.all(xi[r <= 1.0] == 0)
        far = r >= 2.0
        assert np.allclose(xi[far], np.sqrt(1 + r[far] ** 2) - self.tr.offset, atol=1e-12)
        slope = np.diff(xi) / np.diff(r)
        assert np.all(slope < 1.0) and np.all(slope >= -1e-12)

    def test_continuity_at_2R(self):
        eps = 1e-9
        assert self.tr.xi_radial(2.0 - eps) == pytest.approx(self.tr.xi_radial(2.0 + eps), abs=1e-8)

    def test_gradient_bound(self, rng):
        x = rng.uniform(-5, 5, size=(200, 2))
        assert np.all(np.linalg.norm(self.tr.grad_xi(x), axis=-1) <= 1.0)

    def test_roundtrip_and_eta_condition(self, conveyor):
        g = build_grid(conveyor, 0.1)
        V = ValueField(g, np.linspace(1, 2, g.size))
        tr = GrowthTransform.for_model(conveyor)
        assert np.allclose(from_bounded(to_bounded(V, tr), tr).values, V.values)
        with pytest.raises(ValueError):
            GrowthTransform(eta=2.0, R=1.0, lam=1.0, F=1.0)
