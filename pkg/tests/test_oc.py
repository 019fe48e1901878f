import numpy as np
import pytest

from mgtopo.fem import Problem, ProblemSpec, assemble_stiffness, compliance, element_energies, preset
from mgtopo.krylov import PcgOutcome
from mgtopo.linear import DirectSolver
from mgtopo.oc import OcConfig, aoc_step, bisect_lambda, oc_solve, oc_step, oc_update, report_density
from mgtopo.runlog import ConvergenceError


def test_bisect_two_elements():
    lam, x = bisect_lambda([1.0, 1.0], [4.0, 1.0], 2.0, 2.0)
    assert lam == pytest.approx(2.5, abs=1e-9)
    assert np.allclose(x, [1.6, 0.4], atol=1e-9)


def test_bisect_uniform():
    lam, x = bisect_lambda(np.full(6, 0.5), np.full(6, 3.0), 3.0, 2.0)
    assert np.allclose(x, 0.5, atol=1e-9)


def test_bisect_zero_energy_unreachable():
    with pytest.raises(ValueError, match="volume unreachable"):
        bisect_lambda(np.ones(4), np.zeros(4), 4.0, 2.0)


def test_bisect_too_much_volume_at_bracket_end():
    with pytest.raises(ValueError, match="volume unreachable"):
        bisect_lambda(np.ones(2), np.full(2, 1e6), 1.0, 2.0)


@pytest.mark.parametrize("seed", range(5))
def test_bisect_properties(seed):
    rng = np.random.default_rng(seed)
    m = 50
    x, g = rng.uniform(0.1, 1.9, m), rng.uniform(0.0, 3.0, m)
    cfg = OcConfig()
    lam, x_new = bisect_lambda(x, g, 40.0, 2.0, cfg)
    assert np.all(x_new >= cfg.x_lower) and np.all(x_new <= 2.0)
    # one bracket width moves the volume by at most sum(x g) tau / lam^2
    slack = (x * g).sum() * cfg.tau_lambda / lam**2 * 4 + 1e-12
    assert abs(x_new.sum() - 40.0) <= slack
    assert abs(x_new.sum() - 40.0) <= 1e-6 * 40.0


def test_bisect_clamps_large_energy():
    _, x = bisect_lambda([1.0, 1.0, 1.0], [100.0, 1.0, 1.0], 3.0, 2.0)
    assert x[0] == 2.0


def test_doc_q1_matches_oc():
    rng = np.random.default_rng(7)
    x, g = rng.uniform(0.1, 1.9, 30), rng.uniform(0.1, 2.0, 30)
    _, a = bisect_lambda(x, g, 30.0, 2.0, OcConfig("oc"))
    _, b = bisect_lambda(x, g, 30.0, 2.0, OcConfig("doc", q=1.0))
    assert np.array_equal(a, b)
    _, c = bisect_lambda(x, g, 30.0, 2.0, OcConfig("doc", q=0.5))
    assert not np.allclose(a, c)


def test_config_validation():
    for bad in ({"variant": "x"}, {"q": 0.0}, {"q": 1.5}, {"x_lower": 0.0}):
        with pytest.raises(ValueError):
            OcConfig(**bad)


def test_symmetric_fixed_point():
    p = Problem(ProblemSpec(1, 2, levels=1))
    x = np.full(2, p.V / 2)
    solver = DirectSolver(p)
    x_new, _, _ = oc_step(p, x, solver)
    assert np.allclose(x_new, x, atol=1e-9)
    x_avg, (x1, x2), _ = aoc_step(p, x, solver)
    assert np.allclose(x_avg, x, atol=1e-9)


def test_aoc_is_mean_of_inner_iterates():
    p = Problem(preset("ex1", 2))
    x = np.full(p.m, p.V / p.m)
    x_avg, (x1, x2), outs = aoc_step(p, x, DirectSolver(p))
    assert np.array_equal(x_avg, 0.5 * (x1 + x2))
    assert abs(x_avg.sum() - p.V) <= 1e-6 * p.V
    # the second inner step starts from x1
    x2_again, _, _ = oc_step(p, x1, DirectSolver(p))
    assert np.allclose(x2, x2_again)


def test_aoc_fixed_point_of_oc():
    p = Problem(preset("ex1", 2))
    x, _ = oc_solve(p, OcConfig("aoc", tau_oc=1e-13, linear_solver="direct"))
    solver = DirectSolver(p)
    x_oc, _, _ = oc_step(p, x, solver, OcConfig("oc"))
    x_aoc, _, _ = aoc_step(p, x, solver)
    assert np.max(np.abs(x_aoc - x)) <= 10 * np.max(np.abs(x_oc - x)) + 1e-9


def test_descent_on_four_elements():
    p = Problem(ProblemSpec(2, 2, levels=1))
    assert p.m == 4
    solver = DirectSolver(p)
    x = np.full(p.m, p.V / p.m)
    def c(x):
        return compliance(p.f, solver.solve(assemble_stiffness(p.mesh, x), p.f).solution)

    for _ in range(10):
        x_new, _, _ = oc_step(p, x, solver)
        assert c(x_new) <= c(x) + 1e-12
        x = x_new


def test_oc_update_uses_energies():
    p = Problem(preset("ex1", 2))
    x = np.full(p.m, p.V / p.m)
    u = DirectSolver(p).solve(assemble_stiffness(p.mesh, x), p.f).solution
    lam, x_new = oc_update(p.mesh, x, u, p.V, p.xbar)
    assert np.array_equal(x_new, bisect_lambda(x, element_energies(p.mesh, u), p.V, p.xbar)[1])


def test_report_density():
    x = np.array([1e-9, 0.5, 1e-9, 2.0])
    out = report_density(x, 1e-9)
    assert np.array_equal(out, [0.0, 0.5, 0.0, 2.0])
    assert x[0] == 1e-9


@pytest.mark.parametrize("variant", ["oc", "doc", "aoc"])
def test_direct_objective_nonincreasing(variant):
    p = Problem(preset("ex1", 3))
    x, log = oc_solve(p, OcConfig(variant, linear_solver="direct"))
    assert log.status == "converged"
    obj = log.column("objective")
    it = log.column("iter")
    whole = obj[it == np.floor(it)]
    assert np.all(np.diff(whole) <= 1e-12 * whole[0])
    assert abs(x.sum() - p.V) <= 1e-6 * p.V
    assert np.all(x >= 1e-9) and np.all(x <= p.xbar)


@pytest.mark.parametrize("variant", ["doc", "aoc"])
def test_ex1_level3_iterative(variant):
    p = Problem(preset("ex1", 3))
    assert p.n == 144
    _, log = oc_solve(p, OcConfig(variant))
    assert log.status == "converged"
    assert 10 <= log.feval <= 60
    assert log.column("cg_iters").mean() <= 6


def test_log_columns():
    p = Problem(preset("ex1", 2))
    _, log = oc_solve(p, OcConfig("doc", linear_solver="direct"))
    assert tuple(log.columns) == ("iter", "objective", "delta_objective", "lambda", "cg_iters", "cg_tol")
    assert log.feval == len(log.rows)
    assert log.objective == pytest.approx(0.5 * log.column("objective")[-1])


def test_tiny_lower_bound_similar_iterations():
    p = Problem(preset("ex1", 3))
    _, a = oc_solve(p, OcConfig("aoc", x_lower=1e-7, linear_solver="direct"))
    _, b = oc_solve(p, OcConfig("aoc", x_lower=1e-17, linear_solver="direct"))
    assert a.status == b.status == "converged"
    assert 0.5 <= b.feval / a.feval <= 2.0


class DriftingSolver:
    """Exact solves scaled up a little more on every call."""

    name = "drifting"

    def __init__(self, problem):
        self.exact = DirectSolver(problem)
        self.calls = 0

    def solve(self, A, b, tol=None, mode=None, z0=None, augmented=False):
        self.calls += 1
        x = self.exact.solve(A, b).solution * (1 + 1e-2 * self.calls)
        return PcgOutcome(x, 1, 0.0, True)


def test_adaptive_tolerance_abort():
    p = Problem(preset("ex1", 2))
    with pytest.raises(ConvergenceError, match="iterative solver cannot sustain descent") as exc:
        oc_solve(p, OcConfig("oc"), solver=DriftingSolver(p))
    log = exc.value.log
    assert log.status == "failed"
    assert any("cg_tol" in note for note in log.notes)
    assert np.nanmin(log.column("cg_tol")) < 1e-11
