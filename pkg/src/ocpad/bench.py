"""Method registry and multi-seed benchmark runs."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines as bl
from .config import RunConfig
from .data import Dataset, generate_synthetic, split_protocol
from .errors import ConfigError, OcpadError
from .evaluation import evaluate_per_identity
from .trainer import init_model, new_train_state, score, train

NETWORK_METHODS = {
    "proposed": {},
    "occnn": {"mean_mode": "origin", "pc_mode": "off"},
    "proposed-nopc": {"pc_mode": "off"},
}
METHODS = ("ocsvm", "svdd", "md", "gmm", "occnn", "proposed", "proposed-nopc")
DEFAULT_METHODS = ("ocsvm", "svdd", "md", "gmm", "occnn", "proposed")


class StageError(OcpadError, RuntimeError):
    def __init__(self, stage, method, cause):
        super().__init__(f"{stage} failed for method {method}: {cause}")
        self.stage = stage
        self.method = method


def parse_methods(text):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise ConfigError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
    if len(set(methods)) != len(methods):
        raise ConfigError("methods listed more than once")
    return methods


def trainer_config(cfg: RunConfig, method, seed, input_dim):
    return dataclasses.replace(cfg.trainer, input_dim=input_dim, seed=seed, **NETWORK_METHODS[method])


def fit_method(method, train_set: Dataset, cfg: RunConfig, seed):
    """Fit ``method`` on a bonafide-only set; returns ``(model, running_mean_or_None, log_or_None)``."""
    b = cfg.baselines
    sgd = bl.SgdConfig(b.sgd_iterations, b.sgd_step, seed, b.sgd_batch_size)
    if method in NETWORK_METHODS:
        tcfg = trainer_config(cfg, method, seed, train_set.dim)
        model = init_model(tcfg)
        state = new_train_state(model)
        log = train(model, train_set, tcfg, state=state)
        return model, state.running_mean, log
    if method == "md":
        return bl.fit_mahalanobis(train_set), None, None
    if method == "gmm":
        em = bl.EmConfig(b.gmm_max_iter, b.gmm_tol, b.gmm_restarts, b.gmm_var_floor, seed)
        return bl.fit_gmm(train_set, b.gmm_components, em), None, None
    if method == "ocsvm":
        return bl.fit_linear_ocsvm(train_set, b.ocsvm_nu, sgd), None, None
    if method == "svdd":
        return bl.fit_linear_svdd(train_set, b.svdd_nu, sgd), None, None
    raise ConfigError(f"unknown method {method!r}")


def score_method(model, samples):
    if isinstance(model, bl.MahalanobisModel | bl.GmmModel | bl.LinearOcSvmModel | bl.LinearSvddModel):
        return bl.baseline_score(model, samples)
    return score(model, samples)


@dataclass(frozen=True)
class BenchRow:
    method: str
    seed: int
    acer: float
    apcer: float
    bpcer: float
    n_identities: int


def prepare_split(cfg: RunConfig, seed, dataset=None):
    if dataset is None:
        dataset = generate_synthetic(dataclasses.replace(cfg.data, seed=seed))
    rng = np.random.default_rng([seed, 2])
    return split_protocol(dataset, cfg.split.protocol, cfg.split.fraction, rng)


def run_one(cfg: RunConfig, method, seed, dataset=None) -> BenchRow:
    try:
        train_set, test_set = prepare_split(cfg, seed, dataset)
    except OcpadError as exc:
        raise StageError("split", method, exc) from exc
    try:
        model, _, _ = fit_method(method, train_set, cfg, seed)
    except OcpadError as exc:
        raise StageError("fit", method, exc) from exc
    try:
        scores = score_method(model, test_set.features)
        report = evaluate_per_identity(scores, test_set.is_attack, test_set.identities)
    except OcpadError as exc:
        raise StageError("evaluate", method, exc) from exc
    return BenchRow(method, seed, report.mean_acer, report.mean_apcer, report.mean_bpcer, len(report.entries))


def _run_job(args):
    return run_one(*args)


def run_bench(cfg: RunConfig, methods, seeds, dataset=None, jobs=1):
    """Evaluate every (method, seed) pair; rows come back in method-then-seed order."""
    tasks = [(cfg, m, s, dataset) for m in methods for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_job, tasks))
    return [run_one(*t) for t in tasks]


@dataclass(frozen=True)
class MethodSummary:
    method: str
    n: int
    mean_acer: float
    sd_acer: float
    mean_apcer: float
    mean_bpcer: float


def summarize(rows, methods):
    out = []
    for m in methods:
        sel = [r for r in rows if r.method == m]
        acer = np.array([r.acer for r in sel])
        sd = float(acer.std(ddof=1)) if acer.size > 1 else 0.0
        out.append(MethodSummary(
            m, len(sel), float(acer.mean()), sd,
            float(np.mean([r.apcer for r in sel])), float(np.mean([r.bpcer for r in sel])),
        ))
    return out


def format_table(summaries, per_seed_rows=None):
    """Human-readable table: mean ACER% with (APCER%, BPCER%) in brackets."""
    lines = [f"{'method':<15}{'runs':>5}  ACER% (APCER%, BPCER%)", "-" * 56]
    for s in summaries:
        sd = f" ± {s.sd_acer:.3f}" if s.n > 1 else ""
        lines.append(f"{s.method:<15}{s.n:>5}  {s.mean_acer:.3f}{sd} ({s.mean_apcer:.3f}, {s.mean_bpcer:.3f})")
    if per_seed_rows and len({r.seed for r in per_seed_rows}) > 1:
        lines.append("")
        lines.append(f"{'method':<15}{'seed':>5}  ACER% (APCER%, BPCER%)")
        for r in per_seed_rows:
            lines.append(f"{r.method:<15}{r.seed:>5}  {r.acer:.3f} ({r.apcer:.3f}, {r.bpcer:.3f})")
    return "\n".join(lines)


def format_report(cfg: RunConfig, rows, summaries, seeds, source):
    """Machine-readable, tab-separated report; identical inputs give identical bytes."""
    out = ["# ocpad bench report v1", f"# source={source}", f"# seeds={','.join(map(str, seeds))}"]
    out.append("# note ocsvm and svdd are linear variants (no kernel)")
    if cfg.baselines.gmm_components is None:
        out.append("# note gmm components default to min(50, n_train // 10)")
    out.extend(f"# config {line}" for line in cfg.echo())
    out.append("row\tmethod\tseed\tacer\tapcer\tbpcer\tidentities")
    for r in rows:
        out.append(f"run\t{r.method}\t{r.seed}\t{r.acer!r}\t{r.apcer!r}\t{r.bpcer!r}\t{r.n_identities}")
    out.append("row\tmethod\truns\tmean_acer\tsd_acer\tmean_apcer\tmean_bpcer")
    for s in summaries:
        sd = s.sd_acer if math.isfinite(s.sd_acer) else 0.0
        out.append(f"summary\t{s.method}\t{s.n}\t{s.mean_acer!r}\t{sd!r}\t{s.mean_apcer!r}\t{s.mean_bpcer!r}")
    return "\n".join(out) + "\n"
