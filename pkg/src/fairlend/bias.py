"""Counterfactual bias injectors: random group-targeted and location-proxy.

Both injectors only ever flip approvals to denials (never the reverse), never
touch the actual labels, and are pure functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import round_half_up
from .errors import InvalidConfig, TargetUnreachable
from .tabular import LabelSet


@dataclass(frozen=True)
class BiasInjectionReport:
    scenario: str  # "random_group" | "location_proxy"
    flips: tuple[int, ...]
    target_count: int
    achieved_group_denial_rate: float
    seed: int
    tracts_touched: tuple[int, ...] = ()

    def to_text(self) -> str:
        lines = [
            f"scenario={self.scenario}",
            f"seed={self.seed}",
            f"target_count={self.target_count}",
            f"achieved_group_denial_rate={self.achieved_group_denial_rate!r}",
        ]
        if self.scenario == "location_proxy":
            lines.append("tracts_touched=" + ",".join(map(str, self.tracts_touched)))
        lines.append("flips=" + ",".join(map(str, self.flips)))
        return "\n".join(lines) + "\n"


def inject_random_bias(
    labels: LabelSet,
    group_flags: np.ndarray,
    rate_multiplier: float,
    seed: int,
) -> tuple[LabelSet, BiasInjectionReport]:
    """Flip group-member approvals to denial until the group denial rate is
    ``rate_multiplier`` times its current value. Non-group rows untouched.
    """
    if rate_multiplier < 1.0:
        raise InvalidConfig("rate_multiplier must be at least 1")
    g = np.asarray(group_flags, dtype=bool)
    biased = labels.biased.copy()
    n_g = int(g.sum())
    if n_g == 0:
        raise InvalidConfig("no group members present")
    denied_g = int((biased[g] == 0).sum())
    target_rate = rate_multiplier * denied_g / n_g
    if target_rate > 1.0:
        raise InvalidConfig(
            f"target denial rate {target_rate:.3f} exceeds 1; lower the multiplier"
        )
    k = round_half_up(target_rate * n_g) - denied_g

    candidates = np.flatnonzero(g & (biased == 1))
    if k > candidates.size:
        raise TargetUnreachable(
            f"need {k} flips but only {candidates.size} group approvals remain"
        )
    rng = np.random.default_rng(seed)
    flips = np.sort(rng.choice(candidates, size=k, replace=False)) if k > 0 else np.empty(0, dtype=np.int64)
    biased[flips] = 0

    achieved = float((biased[g] == 0).mean())
    report = BiasInjectionReport(
        scenario="random_group",
        flips=tuple(int(i) for i in flips),
        target_count=int(k),
        achieved_group_denial_rate=achieved,
        seed=seed,
    )
    return labels.with_biased(biased), report


def inject_location_bias(
    labels: LabelSet,
    group_flags: np.ndarray,
    tract_ids: np.ndarray,
    flip_count: int,
    seed: int,
) -> tuple[LabelSet, BiasInjectionReport]:
    """Flip approvals to denial tract by tract, highest group share first.

    Tracts are ranked by group share descending (ties: smaller tract id
    first); every approval in a tract flips before the next tract is touched,
    and a seeded uniform subset of the final tract's approvals tops up the
    count exactly. Flips hit all ethnicities in the targeted tracts.
    """
    g = np.asarray(group_flags, dtype=bool)
    tract = np.asarray(tract_ids)
    biased = labels.biased.copy()
    approvals = biased == 1
    if flip_count > int(approvals.sum()):
        raise TargetUnreachable(
            f"flip_count {flip_count} exceeds the {int(approvals.sum())} approvals available"
        )

    unique_tracts = np.unique(tract)
    shares = np.array([g[tract == t].mean() for t in unique_tracts])
    # descending share, ascending tract id on ties
    order = np.lexsort((unique_tracts, -shares))
    ranked = unique_tracts[order]

    rng = np.random.default_rng(seed)
    remaining = int(flip_count)
    flips: list[int] = []
    touched: list[int] = []
    for t in ranked:
        if remaining == 0:
            break
        rows = np.flatnonzero((tract == t) & approvals)
        if rows.size == 0:
            continue
        touched.append(int(t))
        if rows.size <= remaining:
            chosen = rows
        else:
            chosen = np.sort(rng.choice(rows, size=remaining, replace=False))
        flips.extend(int(i) for i in chosen)
        remaining -= chosen.size
    if flips:
        biased[np.asarray(flips, dtype=np.int64)] = 0

    achieved = float((biased[g] == 0).mean()) if g.any() else 0.0
    report = BiasInjectionReport(
        scenario="location_proxy",
        flips=tuple(sorted(flips)),
        target_count=int(flip_count),
        achieved_group_denial_rate=achieved,
        seed=seed,
        tracts_touched=tuple(touched),
    )
    return labels.with_biased(biased), report
