"""Acceptance suite: one check per physical law or oracle, with pinned tolerances.

Each criterion returns its metrics and a pass flag; the runner adds a
runtime check and writes a machine-readable report.  Tolerances live in
:data:`TOLERANCES` and can be overridden (``"AC5.max_trace_distance"``).
"""

from __future__ import annotations

import filecmp
import json
import math
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import harness
from . import scenarios as sc
from .filters import GaussianBelief, gaussian_grid, gaussian_step, grid_step
from .lindblad import LindbladModel, StepperConfig, integrate, steady_state
from .operators import annihilation, coherent_state, ket2dm, purity, trace_distance
from .trajectories import h_superop

SCHEMA_VERSION = 1

TOLERANCES = {
    "AC1": {"relative_error": 1e-3},
    "AC2": {"ratio_low": 3.4, "ratio_high": 4.6},
    "AC3": {"relative_error": 1e-6},
    "AC4": {"exact_abs_error": 1e-8, "euler_abs_error": 1e-3, "grid_abs_error": 1e-3},
    "AC5": {"max_trace_distance": 0.05},
    "AC6": {"median_purity": 0.99},
    "AC7": {"amplitude_error": 1e-6, "purity_deficit": 1e-6},
    "AC8": {"max_trace_distance": 0.02},
    "AC9": {"max_z": 3.0},
    "AC10": {"trace_norm": 1e-8},
    "AC11": {},
}

RUNTIME_LIMITS = {
    "AC1": 5.0, "AC2": 5.0, "AC3": 1.0, "AC4": 10.0, "AC5": 300.0, "AC6": 60.0,
    "AC7": 30.0, "AC8": 600.0, "AC9": 300.0, "AC10": 1.0, "AC11": None,
}

SEED = 20240601


@dataclass
class CriterionResult:
    cid: str
    name: str
    passed: bool
    metrics: dict
    tolerances: dict
    runtime_limit: float | None
    runtime: float = 0.0
    detail: str = ""

    @property
    def runtime_ok(self) -> bool:
        return self.runtime_limit is None or self.runtime <= self.runtime_limit

    @property
    def ok(self) -> bool:
        return self.passed and self.runtime_ok

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        limit = f" (limit {self.runtime_limit:g} s)" if self.runtime_limit else ""
        extra = f" - {self.detail}" if self.detail else ""
        return f"{status} {self.cid} {self.name}: {self.runtime:.1f} s{limit}{extra}"

    def to_dict(self) -> dict:
        return {
            "id": self.cid,
            "name": self.name,
            "passed": self.ok,
            "law_passed": self.passed,
            "runtime_ok": self.runtime_ok,
            "runtime_limit_s": self.runtime_limit,
            "metrics": self.metrics,
            "tolerances": self.tolerances,
        }


def _vacuum(n):
    v = np.zeros((n, n), dtype=complex)
    v[0, 0] = 1.0
    return v


# ---------------------------------------------------------------- criteria

def ac1(tol, out):
    errs = {}
    for g in (0.001, 0.01, 0.1):
        s = sc.ImpulseScenario.from_gamma(g, target_dim=40)
        summary = harness.run(harness.ExperimentConfig("impulse-noise", s.to_dict(), SEED,
                                                       output_dir=str(out / f"gamma_{g:g}")))
        errs[f"relative_error_gamma_{g:g}"] = summary.metrics["momentum_variance_error"]
    worst = max(errs.values())
    return errs, worst <= tol["relative_error"], f"worst relative error {worst:.2e}"


def ac2(tol, out):
    vac = _vacuum(40)
    d = {}
    for g in (0.01, 0.02):
        s = sc.ImpulseScenario.from_gamma(g, target_dim=40)
        d[g] = trace_distance(sc.impulse_exact(s, vac), sc.impulse_truncated(s, vac))
    ratio = d[0.02] / d[0.01]
    metrics = {"distance_gamma_0.01": d[0.01], "distance_gamma_0.02": d[0.02], "ratio": ratio}
    return metrics, tol["ratio_low"] <= ratio <= tol["ratio_high"], f"ratio {ratio:.3f}"


def ac3(tol, out):
    rng = np.random.default_rng(SEED)
    n, gamma = 8, 2.0
    xs = np.linspace(-1.5, 1.5, n)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    x_op = q @ np.diag(xs) @ q.conj().T
    x_op = 0.5 * (x_op + x_op.conj().T)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho0 = m @ m.conj().T
    rho0 /= np.trace(rho0)
    t = 1.0 / gamma
    model = LindbladModel(np.zeros((n, n)), dephasings=[(gamma, x_op)])
    rho_t = integrate(model, rho0, [0.0, t], StepperConfig(1e-3))[-1]
    r0 = q.conj().T @ rho0 @ q
    rt = q.conj().T @ rho_t @ q
    dx = xs[:, None] - xs[None, :]
    expected = r0 * np.exp(-(gamma / 4) * dx ** 2 * t)
    off = ~np.eye(n, dtype=bool)
    rel = float(np.max(np.abs(rt[off] - expected[off]) / np.abs(expected[off])))
    return {"max_relative_error": rel}, rel <= tol["relative_error"], f"max relative error {rel:.2e}"


def ac4(tol, out):
    gamma, sigma0 = 1.0, 1.0
    dt = 1e-3 / gamma
    n = int(round(1.0 / (gamma * dt)))
    times = dt * np.arange(1, n + 1)
    law = sigma0 * np.exp(-2 * gamma * times)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(SEED)))
    dws = rng.standard_normal(n) * math.sqrt(dt)

    def run(law_name):
        b = GaussianBelief(0.0, sigma0)
        out_ = []
        for dw in dws:
            b = gaussian_step(b, gamma, dw, dt, variance_law=law_name)
            out_.append(b.variance)
        return np.array(out_)

    exact_err = float(np.max(np.abs(run("exact") - law)))
    euler_err = float(np.max(np.abs(run("euler") - law)))
    p = gaussian_grid(0.0, sigma0)
    grid_var, clipped = [], 0.0
    for dw in dws:
        p, c = grid_step(p, gamma, dw, dt)
        clipped = max(clipped, c)
        grid_var.append(p.variance)
    grid_var = np.array(grid_var)
    grid_err = float(np.max(np.abs(grid_var - run("exact"))))
    riccati = sigma0 / (1 + 2 * gamma * sigma0 * times)
    metrics = {
        "exact_abs_error": exact_err,
        "euler_abs_error": euler_err,
        "grid_abs_error": grid_err,
        "grid_final_variance": float(grid_var[-1]),
        "exponential_final_variance": float(law[-1]),
        "riccati_final_variance": float(riccati[-1]),
        "grid_vs_riccati_abs_error": float(np.max(np.abs(grid_var - riccati))),
        "max_clipped_mass": clipped,
    }
    ok = (exact_err <= tol["exact_abs_error"] and euler_err <= tol["euler_abs_error"]
          and grid_err <= tol["grid_abs_error"])
    detail = (f"exact {exact_err:.1e}, euler {euler_err:.1e}, grid {grid_err:.1e} "
              f"(grid vs sigma0/(1+2 Gamma sigma0 t): {metrics['grid_vs_riccati_abs_error']:.1e})")
    return metrics, ok, detail


def ac5(tol, out):
    s = harness.run(harness.ExperimentConfig("ensemble-vs-master", seed=SEED, output_dir=str(out)))
    v = s.metrics["max_trace_distance"]
    return s.metrics, v <= tol["max_trace_distance"], f"max trace distance {v:.4f}"


def ac6(tol, out):
    s = harness.run(harness.ExperimentConfig("filter-localisation", seed=SEED, output_dir=str(out)))
    v = s.metrics["median_purity"]
    return s.metrics, v >= tol["median_purity"], f"median purity {v:.5f}"


# cavity dims per |alpha0| keep the coherent tail below 1e-10
AC7_DIMS = {2.0: 25, 5.0: 64}


def ac7(tol, out):
    kappa = 50.0
    metrics, ok = {}, True
    for amp, dim in AC7_DIMS.items():
        a = annihilation(dim)
        for delta in (0.0, 10.0):
            e = 1j * amp * (kappa / 2 + 1j * delta)
            alpha0 = -1j * e / (kappa / 2 + 1j * delta)
            h = delta * a.conj().T @ a + np.conj(e) * a + e * a.conj().T
            model = LindbladModel(h, dissipators=[(kappa, a)])
            dt = 0.099 / (model.max_rate + model.spectral_radius)
            rho, _ = steady_state(model, StepperConfig(dt), chunk_steps=500, max_time=20.0)
            amp_err = abs(np.einsum("ij,ji->", a, rho) - alpha0)
            deficit = 1.0 - purity(rho)
            key = f"alpha_{amp:g}_delta_{delta:g}"
            metrics[f"{key}_amplitude_error"] = float(amp_err)
            metrics[f"{key}_purity_deficit"] = float(deficit)
            ok &= amp_err <= tol["amplitude_error"] and deficit <= tol["purity_deficit"]
    worst = max(v for k, v in metrics.items() if k.endswith("amplitude_error"))
    return metrics, bool(ok), f"worst amplitude error {worst:.1e}"


def ac8(tol, out):
    s = harness.run(harness.ExperimentConfig("optomech-adiabatic", seed=SEED, output_dir=str(out)))
    v = s.metrics["max_trace_distance"]
    return s.metrics, v <= tol["max_trace_distance"], f"max trace distance {v:.2e}"


def ac9(tol, out):
    s = harness.run(harness.ExperimentConfig("record-control-equivalence", seed=SEED, output_dir=str(out)))
    z = max(s.metrics["max_z_x"], s.metrics["max_z_x2"])
    return s.metrics, z <= tol["max_z"], f"max |z| {z:.2f}"


def ac10(tol, out):
    worst = 0.0
    a = annihilation(40)
    for alpha in (0.0, 0.5, 1.0 + 1.0j, 2.0, -1.2 + 1.6j):
        rho = ket2dm(coherent_state(alpha, 40))
        res = h_superop(a, rho)
        worst = max(worst, float(np.abs(np.linalg.eigvalsh(0.5 * (res + res.conj().T))).sum()))
    return {"max_trace_norm": worst}, worst < tol["trace_norm"], f"max trace norm {worst:.1e}"


@dataclass(frozen=True)
class Criterion:
    cid: str
    name: str
    fn: Callable


CRITERIA = [
    Criterion("AC1", "impulse-momentum-noise", ac1),
    Criterion("AC2", "truncation-order", ac2),
    Criterion("AC3", "dephasing-decay-law", ac3),
    Criterion("AC4", "conditional-variance-law", ac4),
    Criterion("AC5", "ensemble-master-equivalence", ac5),
    Criterion("AC6", "localisation", ac6),
    Criterion("AC7", "cavity-steady-state", ac7),
    Criterion("AC8", "adiabatic-elimination", ac8),
    Criterion("AC9", "record-driven-control", ac9),
    Criterion("AC10", "coherent-pointer-fixed-point", ac10),
    Criterion("AC11", "reproducibility", None),
]
BY_KEY = {c.cid: c for c in CRITERIA} | {c.name: c for c in CRITERIA}


def parse_overrides(items) -> dict:
    """``["AC5.max_trace_distance=0.01", ...]`` to a nested override dict."""
    out = {}
    for item in items or ():
        key, _, value = item.partition("=")
        cid, _, name = key.partition(".")
        if cid not in TOLERANCES or name not in TOLERANCES[cid] or not value:
            raise ValueError(f"bad tolerance override {item!r}")
        out.setdefault(cid, {})[name] = float(value)
    return out


def resolve(selection) -> list:
    if not selection or selection in ("all", ["all"]):
        return list(CRITERIA)
    if isinstance(selection, str):
        selection = [selection]
    try:
        chosen = {BY_KEY[s].cid for s in selection}
    except KeyError as exc:
        raise ValueError(f"unknown criterion {exc.args[0]!r}") from None
    return [c for c in CRITERIA if c.cid in chosen]


def _run_criteria(criteria, out_dir: Path, overrides, echo):
    results = []
    for c in criteria:
        tol = dict(TOLERANCES[c.cid]) | overrides.get(c.cid, {})
        sub = out_dir / c.cid
        sub.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        try:
            metrics, passed, detail = c.fn(tol, sub)
        except Exception as exc:  # report the failure against the named criterion
            metrics, passed, detail = {}, False, f"error: {type(exc).__name__}: {exc}"
        res = CriterionResult(c.cid, c.name, bool(passed), metrics, tol, RUNTIME_LIMITS[c.cid],
                              time.perf_counter() - t0, detail)
        results.append(res)
        if echo:
            echo(res.line())
    return results


def _compare_trees(a: Path, b: Path):
    """Relative paths of output files that differ (timing files excluded)."""
    diffs = []
    files_a = {p.relative_to(a) for p in a.rglob("*") if p.is_file() and "timing" not in p.name}
    files_b = {p.relative_to(b) for p in b.rglob("*") if p.is_file() and "timing" not in p.name}
    for rel in sorted(files_a ^ files_b):
        diffs.append(str(rel))
    for rel in sorted(files_a & files_b):
        if not filecmp.cmp(a / rel, b / rel, shallow=False):
            diffs.append(str(rel))
    return diffs


def _write_report(results, out_dir: Path):
    report = {
        "schema_version": SCHEMA_VERSION,
        "passed": all(r.ok for r in results),
        "criteria": [r.to_dict() for r in results],
    }
    with open(out_dir / "acceptance.json", "w") as fh:
        json.dump(harness._jsonable(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out_dir / "acceptance_timing.json", "w") as fh:
        json.dump({r.cid: r.runtime for r in results}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report


def run_acceptance(selection="all", out_dir=None, overrides=None, echo=print):
    """Run the selected criteria; returns ``(all_passed, results)``.

    Reproducibility (AC11) reruns every other selected criterion (all of
    AC1-AC10 when AC11 is selected alone) into a second directory and
    compares the output files byte for byte.
    """
    overrides = overrides or {}
    criteria = resolve(selection)
    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="qcsim-acceptance-")
        out_dir = tmp.name
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        base = [c for c in criteria if c.cid != "AC11"]
        want_repro = any(c.cid == "AC11" for c in criteria)
        results = _run_criteria(base, out_dir, overrides, echo)
        if want_repro:
            repeat = base or [c for c in CRITERIA if c.cid != "AC11"]
            t0 = time.perf_counter()
            with tempfile.TemporaryDirectory(prefix="qcsim-repeat-") as d1, \
                    tempfile.TemporaryDirectory(prefix="qcsim-repeat-") as d2:
                first = Path(d1)
                if base:
                    for c in base:
                        shutil.copytree(out_dir / c.cid, first / c.cid)
                else:
                    _run_criteria(repeat, first, overrides, None)
                _run_criteria(repeat, Path(d2), overrides, None)
                diffs = _compare_trees(first, Path(d2))
            res = CriterionResult("AC11", "reproducibility", not diffs,
                                  {"differing_files": len(diffs)}, {}, None,
                                  time.perf_counter() - t0,
                                  "outputs byte-identical" if not diffs else f"differs: {', '.join(diffs[:5])}")
            results.append(res)
            if echo:
                echo(res.line())
        report = _write_report(results, out_dir)
        return report["passed"], results
    finally:
        if tmp is not None:
            tmp.cleanup()
