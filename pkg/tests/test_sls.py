import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clsynth.errors import DimensionMismatch, InfeasibleSynthesis, NonConvexObjective
from clsynth.fir import FirTransferMatrix
from clsynth.sls import (SLS, ElementL1, Expression, H2Objective, LQGObjective, Mul,
                         SlsParamsSF, SupportConstraint, assemble_of, assemble_sf,
                         compose_objectives, of_residuals, sf_residuals)
from clsynth.systems import LTISystem, make_chain

from conftest import random_of_system


def scalar_system(a=0.5):
    return LTISystem(A=[[a]], B2=[[1.0]], C1=[[1.0], [0.0]], D12=[[0.0], [1.0]])


def riccati_scalar(a, b, q, r, tol=1e-12):
    P = q
    while True:
        nxt = q + a * a * P - (a * b * P) ** 2 / (r + b * b * P)
        if abs(nxt - P) <= tol:
            return nxt
        P = nxt


def test_scalar_equalities_match_hand_expansion():
    problem = assemble_sf(scalar_system(), 2)
    E, e = problem.equality_system()
    names = list(problem.registry)
    col = {n: i for i, n in enumerate(names)}
    expected = np.zeros((3, 4))
    rhs = np.array([1.0, 0.0, 0.0])
    expected[0, col["Phi_x[1]"]] = 1
    expected[1, [col["Phi_x[2]"], col["Phi_x[1]"], col["Phi_u[1]"]]] = [1, -0.5, -1]
    expected[2, [col["Phi_x[2]"], col["Phi_u[2]"]]] = [0.5, 1]
    # same affine set: stacking adds no rank
    aug = np.column_stack([E.toarray(), e])
    aug_exp = np.column_stack([expected, rhs])
    r = np.linalg.matrix_rank
    assert r(aug) == r(aug_exp) == r(np.vstack([aug, aug_exp])) == 3


def test_first_element_is_identity_for_any_system():
    for T in (1, 3):
        res = SLS("sf", T).solve(make_chain(3))
        np.testing.assert_allclose(res.params.Phi_x[1], np.eye(3), atol=1e-12)
        assert res.params.Phi_x.start == 1


def test_t1_is_deadbeat():
    res = SLS("sf", 1).solve(scalar_system())
    assert res.params.Phi_x[1][0, 0] == pytest.approx(1.0, abs=1e-12)
    assert res.params.Phi_u[1][0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_h2_of_identity_map_is_state_dimension():
    s = LTISystem(A=make_chain(4).A, B2=np.eye(4), C1=np.eye(4), D12=np.zeros((4, 4)))
    problem = assemble_sf(s, 2)
    h = H2Objective().compose(problem, Expression.zero())
    vals = problem.values(np.zeros(problem.registry.size))
    vals["Phi_x[1]"] = np.eye(4)
    assert h.evaluate(vals) == pytest.approx(4.0)


def test_scalar_h2_matches_riccati_cost():
    res = SLS("sf", 30).solve(scalar_system())
    assert res.objective == pytest.approx(riccati_scalar(0.5, 1.0, 1.0, 1.0), abs=1e-6)


def test_chain_h2_matches_riccati_trace(chain_sf):
    import scipy.linalg

    s = make_chain(10)
    P = scipy.linalg.solve_discrete_are(s.A, s.B2, np.eye(10), np.eye(10))
    assert chain_sf.objective == pytest.approx(np.trace(P), rel=1e-9)
    assert chain_sf.residual <= 1e-8


@pytest.mark.parametrize("alpha", [0.01, 3.0, 250.0])
def test_argmin_invariant_to_positive_scaling(alpha):
    s = make_chain(4)
    base = SLS("sf", 6).solve(s)
    scaled = SLS("sf", 6, [H2Objective(), Mul(alpha)]).solve(s)
    for k in ("Phi_x", "Phi_u"):
        np.testing.assert_allclose(scaled.params.blocks()[k].coeffs,
                                   base.params.blocks()[k].coeffs, atol=1e-8)
    assert scaled.objective == pytest.approx(alpha * base.objective, rel=1e-9)


def test_negative_scaling_is_rejected():
    with pytest.raises(NonConvexObjective):
        SLS("sf", 3, [H2Objective(), Mul(-1.0)]).solve(make_chain(3))


def test_composition_examples():
    problem = assemble_sf(make_chain(3), 2)
    assert compose_objectives([], problem).is_constant
    assert compose_objectives([Mul(5.0)], problem).evaluate({}) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_three_modules_equal_monolithic(seed, alpha):
    s = make_chain(4)
    rng = np.random.default_rng(seed)
    problem = assemble_sf(s, 5)
    modules = [H2Objective(), Mul(alpha), ElementL1("Phi_x")]
    h = compose_objectives(modules, problem)
    px = rng.standard_normal((5, 4, 4))
    pu = rng.standard_normal((5, 4, 4))
    vals = {f"Phi_x[{t + 1}]": px[t] for t in range(5)}
    vals.update({f"Phi_u[{t + 1}]": pu[t] for t in range(5)})
    direct = alpha * sum(np.sum((s.C1 @ px[t] + s.D12 @ pu[t]) ** 2) for t in range(5)) \
        + np.sum(np.abs(px))
    assert h.evaluate(vals) == pytest.approx(direct, rel=1e-10, abs=1e-10)
    program = problem.to_program(h)
    phi = problem.registry.flatten(vals)
    assert program.objective(phi) == pytest.approx(direct, rel=1e-10)


def test_l1_promotes_sparsity():
    s = make_chain(6)
    dense = SLS("sf", 8).solve(s)
    sparse = SLS("sf", 8, [H2Objective(), ElementL1("Phi_x", 2.0)]).solve(s)
    count = lambda p: int(np.sum(np.abs(p.Phi_x.coeffs) > 1e-9))
    assert count(sparse.params) < count(dense.params)
    assert sparse.residual <= 1e-8
    assert sparse.solution.polished


def test_diagonal_support_on_phi_u(chain):
    mask = np.eye(10, dtype=bool)
    res = SLS("sf", 20, constraints=[SupportConstraint({"Phi_u": mask})]).solve(chain)
    off = res.params.Phi_u.coeffs[:, ~mask]
    assert np.max(np.abs(off)) <= 1e-12
    assert res.residual <= 1e-8


def test_all_true_mask_changes_nothing():
    s = make_chain(5)
    base = SLS("sf", 8).solve(s)
    same = SLS("sf", 8, constraints=[SupportConstraint({"Phi_u": np.ones((5, 5), bool)})]).solve(s)
    assert same.objective == pytest.approx(base.objective, abs=1e-10)


def test_support_never_lowers_the_optimum():
    s = make_chain(5)
    base = SLS("sf", 8).solve(s)
    tri = np.tril(np.ones((5, 5), bool))
    restricted = SLS("sf", 8, constraints=[SupportConstraint({"Phi_x": tri})]).solve(s)
    assert restricted.objective >= base.objective - 1e-10


def test_no_actuation_with_unstable_plant_is_infeasible():
    s = LTISystem(A=2 * np.eye(2), B2=np.eye(2))
    with pytest.raises(InfeasibleSynthesis):
        SLS("sf", 5, constraints=[SupportConstraint({"Phi_u": np.zeros((2, 2), bool)})]).solve(s)


def test_state_feedback_needs_full_state():
    s = LTISystem(A=np.eye(2) * 0.5, B2=np.eye(2), C2=[[1.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        SLS("sf", 3).solve(s)
    with pytest.raises(DimensionMismatch):
        SLS("sf", 3, [LQGObjective()]).solve(make_chain(3))


def test_of_chain_residual_and_identity(chain_of):
    p = chain_of.params
    assert chain_of.residual <= 1e-8
    np.testing.assert_allclose(p.Phi_xx[1], np.eye(10), atol=1e-12)
    assert p.Phi_xx.start == p.Phi_ux.start == p.Phi_xy.start == 1


def test_of_with_sensor_noise_is_achievable():
    s = make_chain(10, sigma=0.1)
    res = SLS("of", 20, [LQGObjective()]).solve(s)
    assert of_residuals(res.params, s.A, s.B2, s.C2) <= 1e-8


def test_of_with_perfect_measurements_matches_state_feedback(chain_sf, chain_of):
    from clsynth.noise import FixedImpulse
    from clsynth.simulator import Simulator

    s = make_chain(10)
    noise = FixedImpulse.at_channel(10, 4, 10.0)
    a = Simulator().simulate(s, chain_sf.controller, noise, 25)
    b = Simulator().simulate(s, chain_of.controller, noise, 25)
    assert np.max(np.abs(a.u - b.u)) <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_of_random_plant_residual(seed):
    s = random_of_system(seed)
    res = SLS("of", 10).solve(s)
    assert res.residual <= 1e-8


def test_residual_oracle_detects_a_perturbation(chain_sf):
    p = chain_sf.params
    bumped = p.Phi_u.coeffs.copy()
    bumped[3, 0, 0] += 1e-5
    bad = SlsParamsSF(p.Phi_x, FirTransferMatrix(bumped, 1))
    s = make_chain(10)
    assert sf_residuals(bad, s.A, s.B2) == pytest.approx(1e-5, rel=1e-6)


def test_assemble_of_first_equalities():
    problem = assemble_of(make_chain(3), 2)
    assert set(problem.blocks) == {"Phi_xx", "Phi_ux", "Phi_xy", "Phi_uy"}
    assert problem["Phi_uy"].start == 0
