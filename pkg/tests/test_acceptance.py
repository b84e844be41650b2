"""Acceptance criteria 1-10 at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are
repeated in the terminal summary. Wall-clock budgets are part of the
criteria and are checked too.
"""
from __future__ import annotations

import json
import time

import numpy as np
import pytest

from conftest import record
from semibeltrami.anisotropic import (A_from_mu, MatrixField, WeakTestSet, matrix_preset,
                                      mu_from_A, preset_Q, solve_poisson_semilinear,
                                      verify_change_of_variables)
from semibeltrami.beltrami import (BeltramiCoefficient, LinearSolveConfig, invert_map,
                                   principal_map, solve_inhomogeneous)
from semibeltrami.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from semibeltrami.generators import bump_field, bump_profile, disk_indicator, radial_bump
from semibeltrami.grid import (ComplexField, Polynomial, core_mask, d_zbar, laplacian, make_grid,
                               norm_p, polynomial_field)
from semibeltrami.io import HEADER
from semibeltrami.semilinear import (ContinuationConfig, Nonlinearity, compose_solution,
                                     factorize, image_grid, solve_semilinear, vekua_residual)
from semibeltrami.transforms import (beurling_transform, cauchy_transform, log_potential,
                                     potential_dbar)

GRID = make_grid(256, 2.0)
CLOSED_FORM_GRID = make_grid(512, 4.0)


def _ring(grid):
    return (np.abs(grid.z.real) >= 0.9 * grid.L) | (np.abs(grid.z.imag) >= 0.9 * grid.L)


# --------------------------------------------------------------------------
# 1. transform identities
# --------------------------------------------------------------------------


def _smooth_source(grid, rng):
    acc = np.zeros((grid.n, grid.n), dtype=complex)
    for _ in range(3):
        c = 0.25 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        R = rng.uniform(0.65, 0.75)
        acc += complex(*rng.normal(size=2)) * bump_profile(np.abs(grid.z - c), R)
    return ComplexField(grid, acc, 1.0)


def test_criterion_01_transform_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    iso = dbar = lap = 0.0
    for _ in range(10):
        f = _smooth_source(GRID, rng)
        nf = norm_p(f, 2)
        # T is isometric on mean-zero data; d_zbar of a smooth compact field is one
        phi = d_zbar(f)
        iso = max(iso, abs(norm_p(beurling_transform(phi), 2) - norm_p(phi, 2)) / norm_p(phi, 2))
        dbar = max(dbar, norm_p(d_zbar(cauchy_transform(f)) - f, 2) / nf)
        g = f.real
        lap = max(lap, norm_p(laplacian(log_potential(g)) - g, 2) / norm_p(g, 2))
    dt = time.perf_counter() - t0
    ok = iso <= 1e-12 and dbar <= 1e-10 and lap <= 1e-10 and dt < 5
    record(1, ok, f"isometry {iso:.2e}, dbar*C-id {dbar:.2e}, lap*N-id {lap:.2e}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 2. closed-form disk potentials
# --------------------------------------------------------------------------


def test_criterion_02_disk_closed_forms():
    t0 = time.perf_counter()
    g = CLOSED_FORM_GRID
    chi = disk_indicator(g, 1.0)
    z = g.z
    r = np.abs(z)
    inside = r < 1
    with np.errstate(divide="ignore", invalid="ignore"):
        forms = {
            "cauchy": (cauchy_transform(chi), np.where(inside, np.conj(z), 1 / z)),
            "beurling": (beurling_transform(chi), np.where(inside, 0, -1 / z**2)),
            "potential": (log_potential(chi), np.where(inside, (r**2 - 1) / 4, np.log(r) / 2)),
            "dbar_potential": (potential_dbar(chi), np.where(inside, z / 4, 1 / (4 * np.conj(z)))),
        }
    # the closed forms describe the sharp disk; compare outside the mollification collar
    mask = core_mask(g) & (np.abs(r - 1) > 3 * g.dx)
    errs = {k: float(np.abs(f.data - ref)[mask].max()) for k, (f, ref) in forms.items()}
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 2e-2 and dt < 30
    record(2, ok, ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + f", {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 3. linear Beltrami contraction
# --------------------------------------------------------------------------


def test_criterion_03_linear_contraction():
    t0 = time.perf_counter()
    sigma = radial_bump(GRID, 1.0, 0.7, 0.1 - 0.1j)
    rows, ok = [], True
    for k in (0.1, 0.3, 0.5, 0.7):
        mu = BeltramiCoefficient.from_field(radial_bump(GRID, k, 0.8))
        w, rep = solve_inhomogeneous(mu, sigma)
        res = rep.extra["beltrami_residual"]
        ok &= rep.converged and rep.contraction_ratio <= k + 0.05 and res <= 1e-8
        ok &= w.value_at_origin() == 0
        rows.append(f"k={k}: ratio {rep.contraction_ratio:.3f} res {res:.1e}")
    mu = BeltramiCoefficient.from_field(radial_bump(GRID, 0.5, 0.8))
    s2 = radial_bump(GRID, 1.0, 0.5, -0.3j)
    a, b = 0.7 - 1.2j, -2.0 + 0.5j
    w1, _ = solve_inhomogeneous(mu, sigma)
    w2, _ = solve_inhomogeneous(mu, s2)
    w, _ = solve_inhomogeneous(mu, sigma * a + s2 * b)
    comb = w1 * a + w2 * b
    lin = norm_p(w - comb, 2) / norm_p(comb, 2)
    dt = time.perf_counter() - t0
    ok = bool(ok and lin <= 1e-9 and dt < 60)
    record(3, ok, "; ".join(rows) + f"; linearity {lin:.1e}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 4. principal map certification
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bump_map():
    g = CLOSED_FORM_GRID
    mu = BeltramiCoefficient.from_field(radial_bump(g, 0.5, 0.5))
    return principal_map(mu)


def test_criterion_04_principal_map(bump_map):
    t0 = time.perf_counter()
    g = CLOSED_FORM_GRID
    ident = principal_map(BeltramiCoefficient.zero(g))
    rng = np.random.default_rng(4)
    z0 = rng.uniform(-0.5, 0.5, 400) * g.L + 1j * rng.uniform(-0.5, 0.5, 400) * g.L
    id_err = max(float(np.abs(ident.forward.data - g.z).max()),
                 float(np.abs(invert_map(ident, z0) - z0).max()))
    qc = bump_map
    jmin = float(qc.jacobian.data.min())
    ring = float(np.abs(qc.forward.data - g.z)[_ring(g)].max())
    back = invert_map(qc, qc(z0))
    trip = float(np.abs(back - z0).max()) / g.L
    dt = time.perf_counter() - t0
    ok = id_err <= 1e-15 * g.L and jmin > 0 and ring <= 1e-3 and trip <= 1e-8 and dt < 60
    record(4, ok, f"identity {id_err:.1e}, min J {jmin:.3f}, ring deviation {ring:.2e} "
                  f"(tol 1e-3), roundtrip {trip:.1e}L, {dt:.1f}s")
    assert ok


def test_criterion_04_ring_deviation_follows_decay_law(bump_map):
    # f(z) - z ~ (1/pi) (int f_zbar) / z far out; the ring value is fixed by the data
    g = CLOSED_FORM_GRID
    qc = bump_map
    ring = _ring(g)
    dev = float(np.abs(qc.forward.data - g.z)[ring].max())
    moment = abs(np.sum(qc.f_zbar.data) * g.cell_area) / np.pi
    predicted = moment / float(np.abs(g.z[ring]).min())
    assert dev == pytest.approx(predicted, rel=0.02)


# --------------------------------------------------------------------------
# 5. semi-linear fixed point
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def semilinear_problem():
    mu = BeltramiCoefficient.from_field(radial_bump(GRID, 0.3, 0.9))
    sigma = radial_bump(GRID, 1.0, 0.8)
    return mu, sigma


@pytest.fixture(scope="module")
def semilinear_runs(semilinear_problem):
    mu, sigma = semilinear_problem
    t0 = time.perf_counter()
    runs = {}
    for name, q in (("neg_exp", Nonlinearity.neg_exp_modulus()),
                    ("sqrt_profile", Nonlinearity.power_modulus(0.5, 1.0))):
        w, rep = solve_semilinear(mu, sigma, q)
        runs[name] = (q, w, rep)
    return runs, time.perf_counter() - t0


def test_criterion_05_semilinear_fixed_point(semilinear_problem, semilinear_runs):
    from semibeltrami.beltrami import residual_beltrami

    mu, sigma = semilinear_problem
    runs, elapsed = semilinear_runs
    t0 = time.perf_counter()
    rows, ok = [], True
    for name, (q, w, rep) in runs.items():
        target = sigma * ComplexField(GRID, q(w.data))
        cert = norm_p(rep.extra["_source"] - target, 2) / norm_p(sigma, 2)
        res = residual_beltrami(mu, target, w)
        ok &= rep.converged and cert <= 1e-7 and res <= 1e-7
        rows.append(f"{name}: certificate {cert:.1e} residual {res:.1e}")
    cfg = ContinuationConfig(inner_tol=1e-11)
    wc, _ = solve_semilinear(mu, sigma, Nonlinearity.constant(1.0), cfg)
    wl, _ = solve_inhomogeneous(mu, sigma, LinearSolveConfig(tol=1e-13))
    red = norm_p(wc - wl, np.inf) / norm_p(wl, np.inf)
    dt = elapsed + time.perf_counter() - t0
    ok = bool(ok and red <= 1e-9 and dt < 300)
    record(5, ok, "; ".join(rows) + f"; constant-q vs linear {red:.1e}, {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 6. factorization
# --------------------------------------------------------------------------


def test_criterion_06_factorization(semilinear_problem, semilinear_runs):
    mu, sigma = semilinear_problem
    runs, _ = semilinear_runs
    t0 = time.perf_counter()
    q, w, _ = runs["neg_exp"]
    fac = factorize(w, mu, sigma, q=q)
    core = core_mask(GRID)
    back = compose_solution(fac.H, fac.map)
    comp = float(np.abs(back.data - w.data)[core].max()) / w.sup()
    vek = vekua_residual(fac)
    mu0 = BeltramiCoefficient.zero(GRID)
    w0, _ = solve_semilinear(mu0, sigma, q)
    fac0 = factorize(w0, mu0, sigma, q=q)
    exact = float(np.abs(compose_solution(fac0.H, fac0.map).data - w0.data).max()) / w0.sup()
    dt = time.perf_counter() - t0
    ok = comp <= 5e-3 and vek <= 5e-3 and exact <= 1e-12 and dt < 300
    record(6, ok, f"compose error {comp:.1e}, Vekua residual {vek:.1e}, "
                  f"mu=0 roundtrip {exact:.1e}, {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 7. A <-> mu dictionary
# --------------------------------------------------------------------------


def test_criterion_07_dictionary():
    t0 = time.perf_counter()
    g = make_grid(64, 1.0)
    rng = np.random.default_rng(7)
    m = 0.95 * np.sqrt(rng.uniform(size=(64, 64))) * np.exp(2j * np.pi * rng.uniform(size=(64, 64)))
    mu = BeltramiCoefficient.from_field(ComplexField(g, m))
    A = A_from_mu(mu)
    mu_trip = float(np.abs(mu_from_A(A).data - m).max())
    A2 = A_from_mu(mu_from_A(A))
    A_trip = max(float(np.abs(getattr(A2, k).data - getattr(A, k).data).max()
                       / np.abs(getattr(A, k).data).max()) for k in ("a11", "a12", "a22"))
    examples = [((1.0, 0.0, 1.0), 0.0), ((2.0, 0.0, 0.5), -1.0 / 3.0),
                ((np.sqrt(2.0), 1.0, np.sqrt(2.0)), -1j * (np.sqrt(2.0) - 1.0))]
    ex_err = 0.0
    for entries, target in examples:
        Ac = MatrixField.constant(g, *entries)
        mc = mu_from_A(Ac)
        ex_err = max(ex_err, float(np.abs(mc.data - target).max()))
        back = A_from_mu(mc)
        ex_err = max(ex_err, *(float(np.abs(getattr(back, k).data - v).max())
                               for k, v in zip(("a11", "a12", "a22"), entries)))
    dt = time.perf_counter() - t0
    ok = mu_trip <= 1e-12 and A_trip <= 1e-9 and ex_err <= 1e-12 and dt < 1
    record(7, ok, f"mu roundtrip {mu_trip:.1e}, A roundtrip {A_trip:.1e}, "
                  f"worked examples {ex_err:.1e}, {dt:.2f}s")
    assert ok


# --------------------------------------------------------------------------
# 8. Poisson pipeline
# --------------------------------------------------------------------------


def test_criterion_08_poisson_pipeline():
    t0 = time.perf_counter()
    G = bump_field(GRID, 1.0, 0.7)
    u, rep, _ = solve_poisson_semilinear(MatrixField.identity(GRID), G, preset_Q("constant"))
    iso = norm_p(laplacian(u) - G, 2) / norm_p(G, 2)
    A = matrix_preset(GRID, "diag_2_half")
    tests = WeakTestSet.build(GRID, count=20, seed=0)
    ua, rep_a, _ = solve_poisson_semilinear(A, G, preset_Q("neg_exp"), tests=tests)
    weak = rep_a.extra["weak_residual"]
    rep_err = rep_a.extra["representation_error"]
    dt = time.perf_counter() - t0
    ok = rep.converged and rep_a.converged and iso <= 1e-6 and weak <= 1e-4 \
        and rep_err <= 5e-3 and dt < 600
    record(8, ok, f"isotropic laplacian error {iso:.1e}, anisotropic weak residual {weak:.1e} "
                  f"over {tests.count} tests, representation {rep_err:.1e}, {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 9. change of variables
# --------------------------------------------------------------------------


def test_criterion_09_change_of_variables():
    t0 = time.perf_counter()
    tests = WeakTestSet.build(GRID, seed=9)
    rows, worst = [], 0.0
    for preset in ("diag_2_half", "sqrt2"):
        A = matrix_preset(GRID, preset)
        qc = principal_map(mu_from_A(A))
        img = image_grid(qc)
        cases = {"harmonic": Polynomial({(3, 0): 0.5, (0, 3): 0.5}),
                 "modulus_sq": Polynomial({(1, 1): 1.0})}
        for name, poly in cases.items():
            err = verify_change_of_variables(polynomial_field(img, poly, real=True), qc, A, tests)
            worst = max(worst, err)
            rows.append(f"{preset}/{name} {err:.1e}")
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt < 120
    record(9, ok, ", ".join(rows) + f", {dt:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 10. CLI determinism and independent verification
# --------------------------------------------------------------------------


def test_criterion_10_cli(tmp_path):
    t0 = time.perf_counter()
    doc = {"grid": {"n": 128, "L": 2.0},
           "inputs": {"mu": {"builtin": "radial_bump", "k": 0.5, "R": 0.8},
                      "sigma": {"builtin": "radial_bump", "k": 1.0, "R": 0.7}}}
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps(doc))
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [main(["solve-beltrami", "--config", str(cfg), "--out", str(d)]) for d in (a, b)]
    files = ("omega.bfld", "mu.bfld", "sigma.bfld", "report.json")
    identical = all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
    clean = main(["verify", "--config", str(cfg), "--out", str(a)])
    # 10% change at the node of largest modulus
    path = a / "omega.bfld"
    raw = bytearray(path.read_bytes())
    vals = np.frombuffer(bytes(raw[HEADER.size:]), dtype="<c16")
    i = int(np.argmax(np.abs(vals)))
    off = HEADER.size + 16 * i
    raw[off:off + 16] = np.array([vals[i] * 1.1], dtype="<c16").tobytes()
    path.write_bytes(bytes(raw))
    corrupted = main(["verify", "--config", str(cfg), "--out", str(a)])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"n": 128, "L": 2.0},
                               "inputs": {"mu": {"builtin": "radial_bump", "k": 1.0}}}))
    config_code = main(["map", "--config", str(bad)])
    doc["solver"] = {"max_iter": 2}
    cfg.write_text(json.dumps(doc))
    solver_code = main(["solve-beltrami", "--config", str(cfg), "--out", str(tmp_path / "c")])
    dt = time.perf_counter() - t0
    ok = (codes == [EXIT_OK, EXIT_OK] and identical and clean == EXIT_OK
          and corrupted == EXIT_SOLVER and config_code == EXIT_CONFIG
          and solver_code == EXIT_SOLVER and dt < 60)
    record(10, ok, f"bit-identical {identical}, verify clean/corrupted exit {clean}/{corrupted}, "
                   f"config error exit {config_code}, nonconvergence exit {solver_code}, {dt:.1f}s")
    assert ok
