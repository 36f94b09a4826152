"""Acceptance gate: each criterion at its stated tolerance, one line each.

Run with `pytest -v tests/test_acceptance.py` for the per-criterion pass/fail
lines; every test also prints its measured numbers (visible with -s / -rA).
"""

import numpy as np
import pytest

from okpattern.construct import (
    ConstructConfig,
    build_periodic,
    fitted_growth_exponent,
    graph_probe_study,
    local_minimality_probe,
)
from okpattern.diffuse_ok import (
    FlowConfig,
    fitted_order,
    flow_state,
    flow_step,
    gamma_limit_sweep,
    lamella_flow_onset,
)
from okpattern.geometry import interface_mesh
from okpattern.sharp_energy import scaling_check
from okpattern.spectral import laplacian, nonlocal_energy, poisson_zero_mean
from okpattern.stability import (
    lamella_mode_matrix,
    lamella_threshold,
    lamella_wave_mode,
    quad_form,
    translation_mode,
)
from okpattern.torus_field import (
    Ball,
    GridSpec,
    Lamella,
    ScalarField,
    rasterize,
    tanh_profile,
)

LAMELLA = Lamella(axis=0, center=0.5, halfwidth=0.25)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[acceptance {criterion:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_01_green_solver():
    spec = GridSpec((256, 256))
    x = spec.center_mesh()[0]
    u = ScalarField(spec, np.broadcast_to(np.cos(2 * np.pi * x), spec.sizes).copy())
    v = poisson_zero_mean(u)
    sup = float(np.max(np.abs(v.values - u.values / (4 * np.pi**2))))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        rhs = ScalarField(spec, rng.standard_normal(spec.sizes))
        w = poisson_zero_mean(rhs)
        target = rhs.values - rhs.mean
        resid = float(np.linalg.norm(laplacian(w).values + target) / np.linalg.norm(target))
        worst = max(worst, resid)
    report(
        1,
        sup <= 1e-12 and worst <= 1e-10,
        f"cos-mode sup error {sup:.2e} (<=1e-12), worst laplacian residual {worst:.2e} (<=1e-10)",
    )


def test_criterion_02_nonlocal_closed_form():
    nl_1d = nonlocal_energy(rasterize(LAMELLA, GridSpec((512,))))
    nl_2d = nonlocal_energy(rasterize(LAMELLA, GridSpec((256, 256))))
    err_1d = abs(nl_1d - 1.0 / 48)
    err_2d = abs(nl_2d - 1.0 / 48)
    report(
        2,
        err_1d <= 1e-8 and err_2d <= 1e-6,
        f"NL(lamella)-1/48: 512-pt {err_1d:.2e} (<=1e-8), 256^2 {err_2d:.2e} (<=1e-6)",
    )


def test_criterion_03_scaling_identities():
    spec = GridSpec((64, 64))
    worst_nl, worst_total = 0.0, 0.0
    for shape in (LAMELLA, Ball((0.5, 0.5), 0.3)):
        for gamma in (0.0, 1.0, 10.0):
            for k in (1, 2, 4):
                rep = scaling_check(shape, gamma, k, spec)
                worst_nl = max(worst_nl, rep.nonlocal_error)
                worst_total = max(worst_total, rep.total_error)
    report(
        3,
        worst_nl <= 1e-12 and worst_total <= 1e-3,
        f"NL identity err {worst_nl:.2e} (<=1e-12), F^gamma identity err {worst_total:.2e} (<=1e-3)",
    )


def test_criterion_04_flow_audit():
    spec = GridSpec((64, 64))
    rng = np.random.default_rng(4)
    base = tanh_profile(LAMELLA, spec, 0.06).values
    u0 = ScalarField(
        spec, np.clip(base + 0.08 * rng.standard_normal(spec.sizes), -1.1, 1.1), "phase"
    )
    cfg = FlowConfig(eps=0.06, gamma=1.0, dt=1e-3, max_steps=500)
    state = flow_state(u0, cfg)
    mass0 = u0.mean
    drift, increases = 0.0, 0
    for _ in range(500):
        new = flow_step(state, cfg)
        drift = max(drift, abs(new.u.mean - mass0))
        if new.energy > state.energy:
            increases += 1
        state = new
    report(
        4,
        drift <= 1e-12 and increases == 0,
        f"500 steps: mass drift {drift:.2e} (<=1e-12), energy increases {increases} (=0)",
    )


def test_criterion_05_gamma_limit_order():
    spec = GridSpec((4096,))
    rows = gamma_limit_sweep(LAMELLA, 1.0, [0.08, 0.04, 0.02, 0.01], spec)
    diffs = [abs(r.difference) for r in rows]
    monotone = all(b < a for a, b in zip(diffs, diffs[1:]))
    order = fitted_order(rows)
    report(
        5,
        monotone and order >= 0.9,
        f"differences {['%.2e' % d for d in diffs]} decreasing={monotone}, fitted order {order:.2f} (>=0.9)",
    )


def test_criterion_06_translation_degeneracy():
    mesh = interface_mesh(LAMELLA, 64, dim=2)
    phi = translation_mode(mesh, 0)
    worst = 0.0
    for gamma in (0.0, 1.0, 10.0):
        rep = quad_form(LAMELLA, gamma, phi)
        ratio = abs(rep.total) / max(rep.magnitude_scale, 1e-12)
        worst = max(worst, ratio)
    report(6, worst <= 1e-6, f"|Q[nu.e1]| / term scale {worst:.2e} (<=1e-6) over gamma in {{0,1,10}}")


def test_criterion_07_oracle_equivalence():
    spec = GridSpec((320, 320))
    worst = 0.0
    for w in (0.15, 0.25, 0.35):
        shape = Lamella(axis=0, center=0.5, halfwidth=w)
        mesh = interface_mesh(shape, 160, dim=2)
        for q in (1, 2, 3):
            for gamma in (0.0, 1.0, 10.0):
                analytic = lamella_mode_matrix(q, gamma, w).matrix
                vals = {}
                for amps in ((1, 0), (0, 1), (1, 1)):
                    phi = lamella_wave_mode(mesh, q, amps)
                    vals[amps] = quad_form(shape, gamma, phi, spec, method="grid").total
                m11 = 2 * vals[(1, 0)]
                m22 = 2 * vals[(0, 1)]
                m12 = vals[(1, 1)] - vals[(1, 0)] - vals[(0, 1)]
                scale = float(np.max(np.abs(analytic)))
                err = max(
                    abs(m11 - analytic[0, 0]), abs(m22 - analytic[1, 1]), abs(m12 - analytic[0, 1])
                ) / scale
                worst = max(worst, err)
    report(7, worst <= 1e-3, f"mode matrix vs grid quad form, worst rel err {worst:.2e} (<=1e-3)")


def test_criterion_08_threshold_consistency():
    star = lamella_threshold(0.25).gamma_star
    onset = lamella_flow_onset(
        0.25,
        GridSpec((128, 128)),
        eps=0.03,
        gamma_lo=60.0,
        gamma_hi=160.0,
        relax_steps=300,
        evolve_steps=400,
        dt=2e-3,
        rel_tol=0.03,
    )
    dev = abs(onset - star) / star
    report(
        8,
        dev <= 0.10,
        f"mode-scan gamma* {star:.2f} vs flow onset {onset:.2f}, deviation {dev:.1%} (<=10%)",
    )


def test_criterion_09_construction_trends():
    spec = GridSpec((64, 64))
    cfg = ConstructConfig(
        seed=LAMELLA,
        gamma_bar=1.0,
        k_list=(1, 2, 4),
        spec=spec,
        flow=FlowConfig(eps=0.06, dt=5e-3, max_steps=300, energy_tolerance=1e-11),
    )
    results = build_periodic(cfg)
    ok_status = all(cert.status == "ok" for cert, _ in results)
    scaled = [cert.k * cert.grad_h_sup for cert, _ in results]
    # flat interfaces keep grad H at rounding level; the spread proviso is
    # checked above an absolute floor so exact zeros cannot fake a failure
    floor = 1e-9
    spread_ok = max(scaled) <= max(2.0 * min(scaled), floor)
    c0s = [cert.c0_proxy for cert, _ in results]
    c0_ok = all(b <= a + 1e-9 for a, b in zip(c0s, c0s[1:]))
    f2 = next(field for cert, field in results if cert.k == 2)
    probes = local_minimality_probe(f2, 1.0, 2, 200, 3, seed=9)
    probe_ok = probes.min_gap >= -1e-12 and probes.skipped == 0
    report(
        9,
        ok_status and spread_ok and c0_ok and probe_ok,
        f"k*gradH {['%.1e' % s for s in scaled]} spread<=2x(+floor) {spread_ok}, "
        f"c0 {['%.2e' % c for c in c0s]} decreasing {c0_ok}, "
        f"min probe gap {probes.min_gap:.2e} over 200 probes (>= -1e-12)",
    )


def test_criterion_10_quadratic_growth():
    spec = GridSpec((256, 256))
    alphas, gaps = graph_probe_study(0.25, [2, 3, 4, 6, 8], spec, 1.0)
    exponent = fitted_growth_exponent(alphas, gaps)
    report(
        10,
        abs(exponent - 2.0) <= 0.3,
        f"graph-probe energy growth exponent {exponent:.3f} (2 +- 0.3)",
    )


def test_criterion_11_reproducibility(tmp_path):
    from okpattern.cli import run

    argv = [
        "--grid", "64,64",
        "--shape", "lamella",
        "--w", "0.25",
        "--gamma", "1",
        "--k", "1,2,4",
    ]
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run(["scaling", *argv, "--out", str(out)]) == 0
        outs.append(out)
    same_csv = (outs[0] / "report.csv").read_bytes() == (outs[1] / "report.csv").read_bytes()

    flows = []
    for name in ("f1", "f2"):
        out = tmp_path / name
        assert (
            run(["flow", "--grid", "32,32", "--eps", "0.08", "--steps", "40", "--out", str(out)])
            == 0
        )
        flows.append(out)
    same_flow_csv = (flows[0] / "report.csv").read_bytes() == (flows[1] / "report.csv").read_bytes()
    same_field = (flows[0] / "fields" / "final.okf").read_bytes() == (
        flows[1] / "fields" / "final.okf"
    ).read_bytes()
    report(
        11,
        same_csv and same_flow_csv and same_field,
        f"byte-identical reruns: scaling csv {same_csv}, flow csv {same_flow_csv}, field {same_field}",
    )
