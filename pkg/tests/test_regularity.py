import csv
import json

import numpy as np
import pytest

from ekreduce.errors import ConfigError, TooFewPoints
from ekreduce.grid import PeriodicGrid, ScalarField, real_hessian_fd
from ekreduce.operators import EquationSpec
from ekreduce.regularity import (
    CSV_COLUMNS, ExperimentConfig, c2alpha_norm, decay_exponent, default_radii, half_domain,
    holder_seminorm, interior_centers, measure, quadratic_fit_residual, run_experiment, run_sweep,
    sup_norm,
)


def _field(grid, fn):
    return ScalarField(grid, fn(grid.coords()))


def _torus_dist(t, c, period=2 * np.pi):
    d = np.abs(t - c) % period
    return np.minimum(d, period - d)


def test_sup_norm():
    g = PeriodicGrid(2, 4)
    v = np.zeros(g.size)
    v[5] = -3.0
    v[7] = 2.0
    assert sup_norm(ScalarField(g, v)) == 3.0
    assert sup_norm(v) == 3.0


def test_half_domain():
    g = PeriodicGrid(2, 8)
    pts = half_domain(g)
    assert pts.size == 16
    idx = g.multi_index()[pts]
    assert idx.min() == 2 and idx.max() == 5


def test_holder_of_constant_is_zero():
    g = PeriodicGrid(2, 16)
    assert holder_seminorm(ScalarField(g, np.full(g.size, 2.0)), 0.5) == 0.0


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_holder_of_power_cusp(alpha):
    g = PeriodicGrid(1, 64)
    u = _field(g, lambda x: _torus_dist(x[:, 0], np.pi) ** alpha)
    # |x|^alpha has alpha-seminorm exactly 1, attained at the cusp
    assert holder_seminorm(u, alpha) == pytest.approx(1.0, rel=0.1)


def test_holder_budget_monotone():
    g = PeriodicGrid(2, 32)
    u = ScalarField(g, np.random.default_rng(0).normal(size=g.size))
    vals = [holder_seminorm(u, 0.5, pair_budget=b, seed=4) for b in (1000, 4096, 10000, 40000)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_holder_lipschitz_bound():
    g = PeriodicGrid(2, 24)
    u = _field(g, lambda x: np.sin(x[:, 0]) + np.cos(x[:, 1]))
    # |u(x) - u(y)| <= sqrt(2) |x - y| and |x - y| <= pi sqrt(2), so the 0.5 quotient is bounded
    assert holder_seminorm(u, 0.5) <= np.sqrt(2) * (np.pi * np.sqrt(2)) ** 0.5 + 1e-12


def test_holder_rejects_bad_alpha():
    g = PeriodicGrid(1, 8)
    with pytest.raises(ConfigError):
        holder_seminorm(ScalarField(g, np.zeros(8)), 1.0)
    with pytest.raises(ConfigError):
        c2alpha_norm(ScalarField(g, np.zeros(8)), alpha=0.0)


def test_c2alpha_of_constant():
    g = PeriodicGrid(2, 12)
    assert c2alpha_norm(ScalarField(g, np.full(g.size, -1.5))) == pytest.approx(1.5)


def test_c2alpha_shift_only_moves_sup_term():
    g = PeriodicGrid(2, 16)
    u = _field(g, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]))
    pts = half_domain(g)

    def rest(v):
        return c2alpha_norm(v) - np.abs(v.values[pts]).max()

    assert rest(u.shifted(3.0)) == pytest.approx(rest(u), abs=1e-10)


def test_c2alpha_adds_constant_of_matching_sign():
    g = PeriodicGrid(2, 16)
    u = _field(g, lambda x: 1.0 + np.sin(x[:, 0]) * np.cos(x[:, 1]))
    assert c2alpha_norm(u.shifted(2.5)) == pytest.approx(c2alpha_norm(u) + 2.5, abs=1e-12)


def test_holder_nonincreasing_in_alpha():
    g = PeriodicGrid(2, 24)
    u = _field(g, lambda x: 0.5 * np.sin(x[:, 0]) * np.cos(x[:, 1]))
    vals = [holder_seminorm(u, a) for a in (0.2, 0.4, 0.6, 0.8)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_solver_K_measured_matches_norms():
    from ekreduce.grid import laplacian, solve_manufactured

    u, rep, _ = solve_manufactured(EquationSpec("ma", 2), 8, 0.1)
    recomputed = max(sup_norm(u), float(np.max(laplacian(u))))
    assert abs(rep.K_measured - recomputed) <= 1e-12


def test_c2alpha_stable_under_refinement():
    vals = []
    for m in (12, 16, 24):
        g = PeriodicGrid(2, m)
        vals.append(c2alpha_norm(_field(g, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]))))
    assert max(vals) / min(vals) <= 1.15


def test_c2alpha_grows_like_frequency_to_alpha():
    alpha = 0.5
    g = PeriodicGrid(1, 256)
    pts = half_domain(g)
    Ms = np.array([2, 4, 8])
    semis = []
    for M in Ms:
        u = _field(g, lambda x: np.cos(M * x[:, 0]) / M**2)
        H = real_hessian_fd(u)[:, 0, 0]
        # strip the two sup terms, leaving the seminorm of the Hessian
        semis.append(c2alpha_norm(u, alpha=alpha) - np.abs(u.values[pts]).max() - np.abs(H[pts]).max())
    slope = np.polyfit(np.log(Ms), np.log(semis), 1)[0]
    assert abs(slope - alpha) <= 0.2 * alpha


# ----------------------------------------------------------------- decay


def test_decay_of_quadratic_is_infinite():
    g = PeriodicGrid(2, 32)
    c = np.array([16, 16])
    y = lambda x: x - c * g.h
    u = _field(g, lambda x: 1.0 + 0.3 * y(x)[:, 0] ** 2 - y(x)[:, 0] * y(x)[:, 1] + 2 * y(x)[:, 1])
    assert decay_exponent(u, c, default_radii(g)) >= 10


def test_decay_of_smooth_field_is_about_one():
    g = PeriodicGrid(2, 32)
    u = _field(g, lambda x: np.sin(x[:, 0] + 0.3) * np.cos(2 * x[:, 1]) + np.cos(x[:, 0] - x[:, 1]))
    exps = [decay_exponent(u, c, default_radii(g)) for c in interior_centers(g, 10, seed=0)]
    assert abs(np.median(exps) - 1.0) <= 0.3


def test_decay_of_cusp():
    g = PeriodicGrid(1, 4096)
    c = 2048
    u = _field(g, lambda x: _torus_dist(x[:, 0], np.pi) ** 2.5)
    assert abs(decay_exponent(u, c, g.h * np.array([8, 16, 32, 64])) - 0.5) <= 0.1


def test_decay_invariant_under_quadratic():
    g = PeriodicGrid(2, 32)
    u = _field(g, lambda x: np.sin(x[:, 0]) * np.sin(2 * x[:, 1]))
    q = _field(g, lambda x: 0.7 * (x[:, 0] - np.pi) ** 2 - (x[:, 1] - np.pi) + 4.0)
    both = ScalarField(g, u.values + q.values)
    c = (16, 16)
    assert decay_exponent(both, c, default_radii(g)) == pytest.approx(decay_exponent(u, c, default_radii(g)), abs=1e-4)


def test_decay_errors():
    g = PeriodicGrid(2, 16)
    u = _field(g, lambda x: np.sin(x[:, 0]))
    with pytest.raises(TooFewPoints):
        decay_exponent(u, (8, 8), g.h * np.array([0.5, 1.0, 1.2]))
    with pytest.raises(ConfigError):
        decay_exponent(u, (8, 8), g.h * np.array([2.0, 3.0]))


def test_quadratic_fit_residual_exact_on_quadratics():
    rng = np.random.default_rng(5)
    y = rng.uniform(-1, 1, size=(40, 3))
    vals = 1 + y[:, 0] - 2 * y[:, 1] * y[:, 2] + 0.5 * y[:, 2] ** 2
    assert quadratic_fit_residual(y, vals) <= 1e-12


# ------------------------------------------------------------ experiments


def test_config_validation():
    spec = {"family": "ma", "n": 1}
    with pytest.raises(ConfigError):
        ExperimentConfig(spec=spec, grid_sizes=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(spec=spec, grid_sizes=[12, 8])
    with pytest.raises(ConfigError):
        ExperimentConfig(spec=spec, alpha=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"spec": spec, "bogus": 1})
    cfg = ExperimentConfig(spec=spec, grid_sizes=[8, 12])
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).to_dict() == cfg.to_dict()


def test_config_from_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(arr)


def test_run_experiment_writes_csv(tmp_path):
    out = tmp_path / "r.csv"
    cfg = ExperimentConfig(spec=EquationSpec("ma", 1), grid_sizes=[8, 12, 16], centers=5, output=str(out))
    rows = run_experiment(cfg)
    assert [r["grid_m"] for r in rows] == [8, 12, 16]
    assert all(r["converged"] for r in rows)
    with open(out) as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == CSV_COLUMNS
        assert len(list(reader)) == 3


def test_run_experiment_records_failures():
    cfg = ExperimentConfig(spec=EquationSpec("ma", 1), grid_sizes=[8], amplitude=5.0)
    (row,) = run_experiment(cfg)
    assert not row["converged"] and np.isnan(row["u_c2alpha"])


def test_run_sweep_adds_amplitude(tmp_path):
    cfg = ExperimentConfig(spec=EquationSpec("ma", 1), grid_sizes=[8], centers=3, output=str(tmp_path / "s.csv"))
    rows = run_sweep(cfg, [0.05, 0.1])
    assert [r["amplitude"] for r in rows] == [0.05, 0.1]
    with open(tmp_path / "s.csv") as fh:
        assert next(csv.reader(fh)) == ["amplitude"] + CSV_COLUMNS


def test_measure_is_deterministic():
    g = PeriodicGrid(2, 16)
    u = _field(g, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]))
    a = measure(u, u.values, centers=5, seed=3).to_dict()
    b = measure(u, u.values, centers=5, seed=3).to_dict()
    assert a == b
