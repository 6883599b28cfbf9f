"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
quantity; the lines are repeated in the pytest terminal summary.
"""

import sys
import time

import numpy as np
import pytest

from clsynth.cli import run_demo, main
from clsynth.iop import IOP
from clsynth.noise import FixedImpulse, GaussianNoise, SumNoise
from clsynth.qp import ConvexProgram, kkt_residuals, solve_admm, solve_qp, stationarity_scale
from clsynth.simulator import Simulator
from clsynth.sls import SLS, ElementL1, H2Objective, LQGObjective, Mul, assemble_sf, \
    compose_objectives, of_residuals, sf_residuals
from clsynth.systems import LTISystem, center_node, make_chain, spectral_radius

REPORT = []
SOLVES = []   # (label, algorithm, system, solution) for the certificate check

T = 20
HORIZON = 25
NODE = center_node(10)


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)
    return ok


def timed_solve(label, algorithm, system):
    start = time.perf_counter()
    result = algorithm.solve(system)
    elapsed = time.perf_counter() - start
    SOLVES.append((label, algorithm, system, result.solution))
    return result, elapsed


class Replay:
    def __init__(self, w):
        self.w = np.asarray(w)
        self.n_w = self.w.shape[1]

    def sample(self, t):
        return self.w[t].copy()

    def reset(self):
        pass

    def describe(self):
        return {"type": "Replay"}


def convolve(F, w, H):
    out = np.zeros((H, F.shape[0]))
    for t in range(H):
        for tau in range(F.start, min(F.T, t) + 1):
            out[t] += F[tau] @ w[t - tau]
    return out


def fir_times(F, M):
    from clsynth.fir import FirTransferMatrix
    return FirTransferMatrix(F.coeffs @ M, F.start)


@pytest.fixture(scope="module")
def sf_solution():
    return timed_solve("chain SF", SLS("sf", T), make_chain(10))


@pytest.fixture(scope="module")
def of_solution():
    return timed_solve("chain OF", SLS("of", T, [LQGObjective()]), make_chain(10))


@pytest.fixture(scope="module")
def lqg_noisy_solution():
    system = make_chain(10, sigma=0.1)
    return system, timed_solve("chain OF sigma=0.1", SLS("of", T, [LQGObjective()]), system)[0]


def test_criterion_01_chain_construction():
    start = time.perf_counter()
    rho = spectral_radius(make_chain(10).A)
    elapsed = time.perf_counter() - start
    ok = abs(rho - 0.5) <= 1e-3 and elapsed < 1.0
    assert report(1, ok, f"spectral radius {rho:.12f}, {elapsed:.3f} s")


def test_criterion_02_achievability(sf_solution, of_solution):
    s = make_chain(10)
    (sf, t_sf), (of, t_of) = sf_solution, of_solution
    r_sf = sf_residuals(sf.params, s.A, s.B2)
    r_of = of_residuals(of.params, s.A, s.B2, s.C2)
    ok = r_sf <= 1e-8 and r_of <= 1e-8 and t_sf < 30 and t_of < 30
    assert report(2, ok, f"SF residual {r_sf:.2e} ({t_sf:.1f} s), "
                          f"OF residual {r_of:.2e} ({t_of:.1f} s)")


def test_criterion_03_realizations(sf_solution, lqg_noisy_solution):
    H = 30
    worst = {}
    s_sf = make_chain(10)
    sf = sf_solution[0]
    s_of, of = lqg_noisy_solution
    iop, _ = timed_solve("chain IOP (criterion 3)", IOP(T), s_sf)
    plant = iop.plant
    XP = [sum(iop.params.X[i] @ plant.Pyw[k - i] for i in range(k + 1)) for k in range(H)]
    YP = [sum(iop.params.Y[i] @ plant.Pyw[k - i] for i in range(k + 1)) for k in range(H)]
    from clsynth.fir import FirTransferMatrix
    XP, YP = FirTransferMatrix(np.stack(XP)), FirTransferMatrix(np.stack(YP))
    p = of.params
    for seed in range(10):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((H, 10))
        sim = Simulator().simulate(s_sf, sf.controller, Replay(w), H)
        err = max(np.abs(sim.x - convolve(sf.params.Phi_x, w, H)).max(),
                  np.abs(sim.u - convolve(sf.params.Phi_u, w, H)).max())
        worst["SF"] = max(worst.get("SF", 0.0), err)

        w2 = rng.standard_normal((H, s_of.dims.n_w))
        sim = Simulator().simulate(s_of, of.controller, Replay(w2), H)
        x_ref = convolve(fir_times(p.Phi_xx, s_of.B1), w2, H) + \
            convolve(fir_times(p.Phi_xy, s_of.D21), w2, H)
        u_ref = convolve(fir_times(p.Phi_ux, s_of.B1), w2, H) + \
            convolve(fir_times(p.Phi_uy, s_of.D21), w2, H)
        err = max(np.abs(sim.x - x_ref).max(), np.abs(sim.u - u_ref).max())
        worst["OF"] = max(worst.get("OF", 0.0), err)

        sim = Simulator().simulate(s_sf, iop.controller, Replay(w), H)
        err = max(np.abs(sim.y - convolve(XP, w, H)).max(),
                  np.abs(sim.u - convolve(YP, w, H)).max())
        worst["IOP"] = max(worst.get("IOP", 0.0), err)
    ok = max(worst.values()) <= 1e-6
    assert report(3, ok, "max deviation " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_04_deadbeat(tmp_path):
    sim, result, _, _ = run_demo("chain-sf", T, HORIZON, output=str(tmp_path))
    tail = np.abs(sim.x[T + 1:]).max()
    match = max(np.abs(sim.x[t] - 10 * result.params.Phi_x[t][:, NODE]).max()
                for t in range(1, T + 1))
    ok = tail <= 1e-8 and match <= 1e-6 and not np.any(sim.x[0])
    assert report(4, ok, f"max |x[t]| for t > T {tail:.1e}, map mismatch {match:.1e}")


def riccati_scalar(a, b, q, r, tol=1e-12):
    P = q
    while True:
        nxt = q + a * a * P - (a * b * P) ** 2 / (r + b * b * P)
        if abs(nxt - P) <= tol:
            return nxt
        P = nxt


def test_criterion_05_lqr_oracle():
    s = LTISystem(A=[[0.5]], B2=[[1.0]], C1=[[1.0], [0.0]], D12=[[0.0], [1.0]])
    res, _ = timed_solve("scalar SF", SLS("sf", 30), s)
    P = riccati_scalar(0.5, 1.0, 1.0, 1.0)
    gap = abs(res.objective - P)
    assert report(5, gap <= 1e-6, f"H2 {res.objective:.12f} vs Riccati {P:.12f} (gap {gap:.1e})")


def test_criterion_06_iop_equals_state_feedback(sf_solution):
    start = time.perf_counter()
    s = make_chain(10)
    iop, _ = timed_solve("chain IOP", IOP(T), s)
    noise = FixedImpulse.at_channel(10, NODE, 10.0)
    a = Simulator().simulate(s, iop.controller, noise, HORIZON)
    b = Simulator().simulate(s, sf_solution[0].controller, noise, HORIZON)
    elapsed = time.perf_counter() - start + sf_solution[1]
    diff = np.abs(a.u - b.u).max()
    ok = diff <= 1e-4 and elapsed < 60
    assert report(6, ok, f"max |u_IOP - u_SF| {diff:.1e}, {elapsed:.1f} s end-to-end")


def test_criterion_07_lqg_noise(of_solution, lqg_noisy_solution):
    system, res = lqg_noisy_solution
    impulse = FixedImpulse.at_channel(20, NODE, 10.0)
    peaks = []
    for seed in range(20):
        noise = SumNoise(impulse, GaussianNoise.isotropic(20, 1.0, seed, slice(10, 20)))
        sim = Simulator().simulate(system, res.controller, noise, HORIZON)
        peaks.append(np.abs(sim.x[20:25]).max())
    worst = max(peaks)
    # noiseless run of the LQG design for perfect measurements
    clean = Simulator().simulate(make_chain(10), of_solution[0].controller,
                                 FixedImpulse.at_channel(10, NODE, 10.0), T + 15)
    decay = np.abs(clean.x[T + 6:]).max()
    ok = worst <= 1e-2 and decay <= 1e-4
    assert report(7, ok, f"noisy: worst max |x[20:25]| over 20 seeds {worst:.2e} "
                         f"(median {np.median(peaks):.2e}, bound 1e-2); "
                         f"noiseless: max |x[t]| for t > T+5 {decay:.1e}")


def test_criterion_08_composition():
    s = make_chain(4)
    problem = assemble_sf(s, 5)
    worst = 0.0
    rng = np.random.default_rng(2024)
    for _ in range(100):
        alpha = float(rng.uniform(0.01, 100.0))
        h = compose_objectives([H2Objective(), Mul(alpha), ElementL1("Phi_x")], problem)
        px = rng.standard_normal((5, 4, 4))
        pu = rng.standard_normal((5, 4, 4))
        vals = {f"Phi_x[{t + 1}]": px[t] for t in range(5)}
        vals.update({f"Phi_u[{t + 1}]": pu[t] for t in range(5)})
        direct = alpha * sum(np.sum((s.C1 @ px[t] + s.D12 @ pu[t]) ** 2) for t in range(5)) \
            + np.sum(np.abs(px))
        worst = max(worst, abs(h.evaluate(vals) - direct) / max(1.0, abs(direct)))
    assert report(8, worst <= 1e-10, f"max relative gap over 100 samples {worst:.1e}")


def test_criterion_09_certificates():
    checked = []
    for label, algorithm, system, sol in SOLVES:
        problem, objective = algorithm.assemble(system)[:2]
        program = problem.to_program(objective)
        primal, stat = kkt_residuals(program, sol.x, sol.nu)
        scale = stationarity_scale(program, sol.x, sol.nu)
        checked.append((label, primal <= 1e-9 and stat <= 1e-7 * scale, primal, stat / scale))
    admm_gap = 0.0
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        n, m = 15, 6
        M = rng.standard_normal((n + 2, n))
        import scipy.sparse as sp
        p = ConvexProgram(M.T @ M, rng.standard_normal(n), rng.standard_normal((m, n)),
                          rng.standard_normal(m), sp.identity(n), 0.0)
        admm_gap = max(admm_gap, np.abs(solve_admm(p).x - solve_qp(p).x).max())
    ok = bool(checked) and all(c[1] for c in checked) and admm_gap <= 1e-6
    worst_p = max((c[2] for c in checked), default=float("nan"))
    worst_s = max((c[3] for c in checked), default=float("nan"))
    assert report(9, ok, f"{len(checked)} solves certified (worst primal {worst_p:.1e}, "
                         f"relative stationarity {worst_s:.1e}); ADMM vs QP {admm_gap:.1e}")


def test_criterion_10_round_trip(tmp_path):
    demo = tmp_path / "demo"
    run_demo("chain-sf", T, HORIZON, output=str(demo))
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"system = chain:10\nalgorithm = sls-sf\nT = {T}\nhorizon = {HORIZON}\n"
                   f"noise = impulse:0,{NODE},10\noutput = {tmp_path / 'batch'}\n")
    codes = (main(["synth", str(cfg)]),
             main(["simulate", str(cfg), str(tmp_path / "batch" / "params.txt")]))
    files = ["params.txt", "x.csv", "y.csv", "u.csv", "w.csv", "z.csv", "x.pgm", "y.pgm", "u.pgm"]
    same = [(tmp_path / "batch" / f).read_bytes() == (demo / f).read_bytes() for f in files]
    ok = codes == (0, 0) and all(same)
    assert report(10, ok, f"{sum(same)}/{len(files)} files bit-identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
