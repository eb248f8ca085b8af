"""APCER / BPCER / ACER with per-identity threshold selection.

Scores are bonafideness scores: a sample is declared an attack iff its score
is strictly below the threshold. All rates are percentages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError


@dataclass(frozen=True)
class ScoredSample:
    score: float
    identity: str
    label: str


def _arrays(scores, is_attack):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    a = np.asarray(is_attack, dtype=bool).reshape(-1)
    if s.shape != a.shape:
        raise EvaluationError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise EvaluationError("scores must be finite")
    return s, a


def _rates(n_attack_accepted, n_attack, n_bona_rejected, n_bona):
    return 100.0 * n_attack_accepted / n_attack, 100.0 * n_bona_rejected / n_bona


def _acer(apcer, bpcer):
    return (apcer + bpcer) / 2.0


def confusion_rates(scores, is_attack, tau, identity=None):
    """(APCER, BPCER) in percent at threshold ``tau``."""
    s, a = _arrays(scores, is_attack)
    n_att, n_bona = int(a.sum()), int((~a).sum())
    if n_att == 0 or n_bona == 0:
        who = "" if identity is None else f" for identity {identity}"
        raise EvaluationError(f"need both bonafide and attack samples{who}")
    return _rates(int(np.sum(s[a] >= tau)), n_att, int(np.sum(s[~a] < tau)), n_bona)


def threshold_candidates(scores) -> np.ndarray:
    """Midpoints of adjacent distinct sorted scores, bracketed by -inf and +inf."""
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = u[:-1] + (u[1:] - u[:-1]) / 2.0
    return np.concatenate([[-math.inf], mids, [math.inf]])


def best_acer(scores, is_attack, identity=None):
    """Return ``(tau, acer, apcer, bpcer)`` minimizing ACER; ties go to the smallest tau."""
    s, a = _arrays(scores, is_attack)
    n_att, n_bona = int(a.sum()), int((~a).sum())
    if n_att == 0 or n_bona == 0:
        who = "" if identity is None else f" for identity {identity}"
        raise EvaluationError(f"need both bonafide and attack samples{who}")
    taus = threshold_candidates(s)
    att_sorted = np.sort(s[a])
    bona_sorted = np.sort(s[~a])
    # attacks accepted: score >= tau; bonafide rejected: score < tau
    accepted = n_att - np.searchsorted(att_sorted, taus, side="left")
    rejected = np.searchsorted(bona_sorted, taus, side="left")
    best = None
    for tau, acc, rej in zip(taus, accepted, rejected):
        apcer, bpcer = _rates(int(acc), n_att, int(rej), n_bona)
        acer = _acer(apcer, bpcer)
        if best is None or acer < best[1]:
            best = (float(tau), acer, apcer, bpcer)
    return best


@dataclass(frozen=True)
class IdentityResult:
    identity: str
    tau: float
    apcer: float
    bpcer: float
    acer: float
    n_bonafide: int
    n_attack: int


@dataclass
class EvalReport:
    entries: list
    mean_acer: float
    mean_apcer: float
    mean_bpcer: float
    warnings: list = field(default_factory=list)

    def to_lines(self):
        """Machine-readable form: one tab-separated line per identity, then the aggregate."""
        out = ["identity\ttau\tapcer\tbpcer\tacer"]
        for e in self.entries:
            out.append(f"{e.identity}\t{e.tau!r}\t{e.apcer!r}\t{e.bpcer!r}\t{e.acer!r}")
        out.append(f"mean\t\t{self.mean_apcer!r}\t{self.mean_bpcer!r}\t{self.mean_acer!r}")
        for w in self.warnings:
            out.append(f"# warning: {w}")
        return out

    def to_table(self):
        header = f"{'identity':<12}{'tau':>12}{'APCER%':>10}{'BPCER%':>10}{'ACER%':>10}"
        rows = [header, "-" * len(header)]
        for e in self.entries:
            rows.append(f"{e.identity:<12}{e.tau:>12.5g}{e.apcer:>10.3f}{e.bpcer:>10.3f}{e.acer:>10.3f}")
        rows.append("-" * len(header))
        rows.append(f"{'mean':<12}{'':>12}{self.mean_apcer:>10.3f}{self.mean_bpcer:>10.3f}{self.mean_acer:>10.3f}")
        rows.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(rows)


def evaluate_per_identity(scores, is_attack, identities) -> EvalReport:
    """Best-threshold ACER per identity, averaged over identities.

    Identities lacking either class are skipped and listed in ``warnings``.
    Aggregate APCER/BPCER are means of each identity's values at its own
    best threshold.
    """
    s, a = _arrays(scores, is_attack)
    ids = np.asarray(identities, dtype=object).reshape(-1)
    if ids.shape != s.shape:
        raise EvaluationError("identities and scores differ in length")
    entries, warnings = [], []
    for ident in sorted(set(ids)):
        mask = ids == ident
        n_att = int(a[mask].sum())
        n_bona = int(mask.sum()) - n_att
        if n_att == 0 or n_bona == 0:
            warnings.append(f"identity {ident} excluded: lacks {'attack' if n_att == 0 else 'bonafide'} samples")
            continue
        tau, acer, apcer, bpcer = best_acer(s[mask], a[mask], identity=ident)
        entries.append(IdentityResult(ident, tau, apcer, bpcer, acer, n_bona, n_att))
    if not entries:
        raise EvaluationError("no identity has both bonafide and attack samples")
    return EvalReport(
        entries,
        mean_acer=float(np.mean([e.acer for e in entries])),
        mean_apcer=float(np.mean([e.apcer for e in entries])),
        mean_bpcer=float(np.mean([e.bpcer for e in entries])),
        warnings=warnings,
    )


def evaluate_samples(samples) -> EvalReport:
    samples = list(samples)
    return evaluate_per_identity(
        [x.score for x in samples],
        [x.label == "attack" for x in samples],
        [x.identity for x in samples],
    )
