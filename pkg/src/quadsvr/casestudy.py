"""Simulated case study: four SVR formulations on ``y = x + Laplace noise``.

The pipeline trains nu-SVR, feeds its tube width into eps-SVR, maps the
result back to a probability level, then fits the deviation form and the
dual, and reports pairwise agreement.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .distribution import cvar
from .drr import Laplace
from .svr import (
    Dataset,
    Formulation,
    SvrConfig,
    SvrModel,
    alpha_from_eps,
    eps_from_alpha,
    train,
)

__all__ = [
    "simulate",
    "CaseStudyConfig",
    "ResultRow",
    "ResultsTable",
    "CaseStudyResult",
    "equivalence_report",
    "run_case_study",
    "write_case_study",
]

ALL_FORMULATIONS = tuple(f.value for f in Formulation)

_ROW_LABELS = {
    Formulation.NU_PRIMAL: ("nu-SVR (primal)", "error"),
    Formulation.EPS_PRIMAL: ("eps-SVR (primal)", "error"),
    Formulation.NU_DEVIATION: ("nu-SVR (primal)", "deviation"),
    Formulation.NU_DUAL: ("nu-SVR (dual)", "error"),
}


def _uniforms(l: int, seed: int) -> np.ndarray:
    """Open-interval uniforms ``(k + 1/2) / 2^53`` from PCG64."""
    rng = np.random.Generator(np.random.PCG64(seed))
    k = rng.integers(0, 2**53, size=l, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / 2.0**53


def simulate(l: int, seed: int, noise: Laplace | None = None) -> Dataset:
    """``x_i = (i-1)/(l-1)``, ``y_i = x_i + e_i`` with Laplace(0, 1) noise."""
    if l < 2:
        raise ValueError("l must be at least 2")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    noise = noise or Laplace(0.0, 1.0)
    x = np.arange(l, dtype=float) / (l - 1)
    e = noise.quantile(_uniforms(l, seed))
    return Dataset(x[:, None], x + e)


@dataclass(frozen=True)
class CaseStudyConfig:
    l: int = 1000
    seed: int = 0
    alpha: float = 0.6
    capC: float = 1.0
    formulations: tuple = ALL_FORMULATIONS
    output_dir: str | None = None
    input: str | None = None
    timing: bool = False
    tolerance: float = 1e-3
    alpha_tolerance: float = 5e-3

    def __post_init__(self):
        object.__setattr__(self, "formulations",
                           tuple(Formulation(f).value for f in self.formulations))
        if self.l < 2:
            raise ValueError("l must be at least 2")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not self.capC > 0:
            raise ValueError("C must be positive")
        if not self.formulations:
            raise ValueError("no formulations requested")

    @classmethod
    def from_json(cls, text_or_path: str) -> "CaseStudyConfig":
        """Build from a JSON string or a path to a JSON file."""
        text = text_or_path
        if not text.lstrip().startswith("{"):
            text = Path(text_or_path).read_text()
        raw = json.loads(text)
        if "C" in raw:
            raw["capC"] = raw.pop("C")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class ResultRow:
    method: str
    measure: str
    b: float
    w: tuple
    alpha: float
    eps: float
    solve_seconds: float | None


def _fmt(v: float) -> str:
    return f"{v:.6f}"


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)

    HEADER = ("method", "measure", "b", "w", "alpha", "eps", "solve_seconds")

    def as_lines(self) -> list[str]:
        out = [",".join(self.HEADER)]
        for r in self.rows:
            secs = "" if r.solve_seconds is None else f"{r.solve_seconds:.2f}"
            out.append(",".join([r.method, r.measure, _fmt(r.b), ";".join(_fmt(v) for v in r.w),
                                 _fmt(r.alpha), _fmt(r.eps), secs]))
        return out

    def to_csv(self, path):
        Path(path).write_text("\n".join(self.as_lines()) + "\n")

    def __str__(self):
        return "\n".join(self.as_lines())


def _comparable_objective(m: SvrModel) -> float:
    """nu-SVR objective ``(1-a) CVaR_a(|Z|) + (lam/2)|w|^2`` at the model's linked level."""
    a = m.linked_alpha.midpoint if m.formulation is Formulation.EPS_PRIMAL else m.alpha
    a = min(a, np.nextafter(1.0, 0.0))
    reg = 0.5 * m.lam * float(m.weights @ m.weights) if m.weights is not None else 0.0
    return (1.0 - a) * cvar(m.residuals.abs(), a) + reg


def equivalence_report(model_a: SvrModel, model_b: SvrModel, tol: float = 1e-3,
                       alpha_tol: float = 5e-3) -> dict:
    """Pairwise agreement of two models fitted on the same dataset.

    ``pass`` requires ``max|dw| <= tol``, ``|db| <= tol`` and, when one side
    is an eps fit, the linked levels within ``alpha_tol``.
    """
    if model_a.fingerprint != model_b.fingerprint:
        raise ValueError("models were trained on different datasets")
    if model_a.weights is None or model_b.weights is None:
        raise ValueError("equivalence is defined for linear models")
    dw = float(np.max(np.abs(model_a.weights - model_b.weights)))
    db = abs(model_a.intercept - model_b.intercept)
    da = abs(model_a.linked_alpha.midpoint - model_b.linked_alpha.midpoint)
    de = abs(model_a.linked_eps.midpoint - model_b.linked_eps.midpoint)
    gap = abs(_comparable_objective(model_a) - _comparable_objective(model_b))
    passed = dw <= tol and db <= tol and da <= alpha_tol
    return {
        "a": model_a.formulation.value,
        "b": model_b.formulation.value,
        "max_abs_dw": dw,
        "abs_db": db,
        "objective_gap": gap,
        "abs_dalpha": da,
        "abs_deps": de,
        "tolerance": tol,
        "alpha_tolerance": alpha_tol,
        "pass": bool(passed),
    }


@dataclass
class CaseStudyResult:
    table: ResultsTable
    report: dict
    models: dict
    dataset: Dataset

    @property
    def passed(self) -> bool:
        return bool(self.report["pass"])


def run_case_study(cfg: CaseStudyConfig, dataset: Dataset | None = None) -> CaseStudyResult:
    if dataset is None:
        dataset = Dataset.from_csv(cfg.input) if cfg.input else simulate(cfg.l, cfg.seed)
    d = dataset
    wanted = [Formulation(f) for f in cfg.formulations]
    models: dict[Formulation, SvrModel] = {}

    def fit(form, **kw):
        try:
            return train(d, SvrConfig(form, capC=cfg.capC, **kw))
        except Exception as exc:
            raise RuntimeError(f"{form.value} failed: {exc}") from exc

    nu = fit(Formulation.NU_PRIMAL, alpha=cfg.alpha)
    if Formulation.NU_PRIMAL in wanted:
        models[Formulation.NU_PRIMAL] = nu
    alpha_new = None
    eps = eps_from_alpha(nu, cfg.alpha).midpoint
    if Formulation.EPS_PRIMAL in wanted:
        em = fit(Formulation.EPS_PRIMAL, eps=eps)
        _, alpha_new = alpha_from_eps(em, eps)
        models[Formulation.EPS_PRIMAL] = em
    if Formulation.NU_DEVIATION in wanted:
        models[Formulation.NU_DEVIATION] = fit(Formulation.NU_DEVIATION, alpha=cfg.alpha)
    if Formulation.NU_DUAL in wanted:
        models[Formulation.NU_DUAL] = fit(Formulation.NU_DUAL, alpha=cfg.alpha)

    table = ResultsTable()
    for form in _ROW_LABELS:
        if form not in models:
            continue
        m = models[form]
        method, measure = _ROW_LABELS[form]
        if form is Formulation.EPS_PRIMAL:
            a, e = alpha_new, eps
        else:
            a, e = cfg.alpha, m.linked_eps.midpoint
        table.rows.append(ResultRow(method, measure, m.intercept, tuple(m.weights.tolist()),
                                    a, e, m.solve_seconds if cfg.timing else None))

    pairs = [equivalence_report(models[a], models[b], cfg.tolerance, cfg.alpha_tolerance)
             for a, b in combinations(sorted(models, key=lambda f: f.value), 2)]
    alpha_gap = None if alpha_new is None else abs(alpha_new - cfg.alpha)
    passed = all(p["pass"] for p in pairs) and (alpha_gap is None or alpha_gap <= cfg.alpha_tolerance)
    report = {
        "dataset": d.fingerprint(),
        "l": d.l,
        "alpha": cfg.alpha,
        "C": cfg.capC,
        "eps": eps,
        "alpha_new": alpha_new,
        "abs_alpha_gap": alpha_gap,
        "pairs": pairs,
        "max_abs_dw": max((p["max_abs_dw"] for p in pairs), default=0.0),
        "max_abs_db": max((p["abs_db"] for p in pairs), default=0.0),
        "pass": bool(passed),
    }
    return CaseStudyResult(table, report, models, d)


def write_case_study(result: CaseStudyResult, output_dir) -> list[str]:
    """Write ``results.csv``, ``equivalence.json`` and the models; returns the paths."""
    os.makedirs(output_dir, exist_ok=True)
    out = Path(output_dir)
    paths = [out / "results.csv", out / "equivalence.json", out / "dataset.csv"]
    result.table.to_csv(paths[0])
    paths[1].write_text(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    result.dataset.to_csv(paths[2])
    for form, m in sorted(result.models.items(), key=lambda kv: kv[0].value):
        p = out / f"model-{form.value}.json"
        p.write_text(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n")
        paths.append(p)
    return [str(p) for p in paths]
