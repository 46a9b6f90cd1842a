"""Toy latent-intervention loop.

A latent of ``N * D * D`` logits renders every token's attention map through a
per-token softmax. During the first ``intervention_steps`` of ``total_steps``
the latent takes a plain gradient step ``z - alpha * grad L``; the remaining
steps only apply the (optional) Gaussian background drift.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .loss import (
    AttentionTensor,
    LossReport,
    PieceAlignment,
    grad_scores,
    loss_total,
    softmax_maps,
    sym_kl,
)

logger = logging.getLogger(__name__)

LATENT_LIMIT = 1e6
# exp() underflows to exactly 0 in float64 below about -745: a wider logit
# spread pins part of the map to the epsilon floor with zero gradient
LOGIT_SPREAD_LIMIT = 745.0


class DivergenceError(RuntimeError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


@dataclass(frozen=True)
class LatentState:
    z: np.ndarray
    n_tokens: int
    grid_side: int
    step: int = 0

    @property
    def logits(self) -> np.ndarray:
        return self.z.reshape(self.n_tokens, self.grid_side ** 2)


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int = 50
    intervention_steps: int = 25
    scale_factor: float = 20.0
    drift_stddev: float = 0.0
    rng_seed: int = 0
    grid_side: int = 16
    backtrack: bool = False
    snapshot_every: int = 5

    def __post_init__(self):
        if not 0 <= self.intervention_steps <= self.total_steps:
            raise ValueError("need 0 <= intervention_steps <= total_steps")
        if self.scale_factor < 0:
            raise ValueError("scale_factor must be non-negative")
        if self.drift_stddev < 0:
            raise ValueError("drift_stddev must be non-negative")
        if self.grid_side < 2:
            raise ValueError("grid_side must be at least 2")

    @classmethod
    def toy(cls, **overrides) -> "ScheduleConfig":
        """Settings calibrated for the softmax-logit toy model."""
        params = dict(scale_factor=TOY_SCALE_FACTOR, grid_side=TOY_GRID_SIDE, backtrack=True)
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


TOY_SCALE_FACTOR = 1.0
TOY_GRID_SIDE = 8


@dataclass
class StepRecord:
    step: int
    report: LossReport
    descent_ok: bool | None = None
    step_size: float | None = None
    maps: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"step": self.step}
        out.update(self.report.to_dict())
        return out


@dataclass
class Trajectory:
    records: list[StepRecord] = field(default_factory=list)
    roots: tuple[int, ...] = ()
    align: PieceAlignment | None = None
    final_state: LatentState | None = None

    def __len__(self):
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.report.l_total for r in self.records])

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.records)


def init_latent(n_tokens: int, grid_side: int, rng_seed: int) -> LatentState:
    if n_tokens < 1 or grid_side < 2:
        raise ValueError(f"invalid dimensions n_tokens={n_tokens}, grid_side={grid_side}")
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal(n_tokens * grid_side * grid_side)
    return LatentState(z, n_tokens, grid_side, 0)


def render_maps(state: LatentState) -> AttentionTensor:
    return AttentionTensor(softmax_maps(state.logits), state.grid_side)


def _loss(state, sets, align):
    return loss_total(softmax_maps(state.logits), sets, align)


def update_step(state: LatentState, sets, align: PieceAlignment, config: ScheduleConfig):
    """One intervention step. Returns ``(new_state, report, descent_ok, step_size)``.

    With ``config.backtrack`` the step size is halved until the loss does not
    increase (at most 30 halvings); otherwise the plain step is taken and the
    descent check is only recorded.
    """
    t = state.step + 1
    grad = grad_scores(state.logits, sets, align).ravel()
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient", t)
    before = _loss(state, sets, align).l_total
    alpha = config.scale_factor
    for _ in range(31):
        z = state.z - alpha * grad
        if not np.all(np.isfinite(z)):
            raise DivergenceError("non-finite latent", t)
        new = LatentState(z, state.n_tokens, state.grid_side, t)
        report = _loss(new, sets, align)
        if not np.isfinite(report.l_total):
            raise DivergenceError("non-finite loss", t)
        ok = report.l_total <= before
        if ok or not config.backtrack:
            break
        alpha *= 0.5
    check_latent(new)
    return new, report, ok, alpha


def check_latent(state: LatentState) -> None:
    """Raise :class:`DivergenceError` if the latent left the usable range."""
    if not state.z.size:
        return
    peak = float(np.max(np.abs(state.z)))
    if peak > LATENT_LIMIT:
        raise DivergenceError(f"latent magnitude {peak:.3g} exceeds {LATENT_LIMIT:g}", state.step)
    logits = state.logits
    spread = float(np.max(logits.max(axis=1) - logits.min(axis=1)))
    if spread > LOGIT_SPREAD_LIMIT:
        raise DivergenceError(
            f"logit spread {spread:.3g} exceeds {LOGIT_SPREAD_LIMIT:g} (softmax underflow)", state.step)


def _drift(state, rng, stddev):
    if stddev == 0:
        return state
    z = state.z + stddev * rng.standard_normal(state.z.shape)
    return LatentState(z, state.n_tokens, state.grid_side, state.step)


def run(sets, align: PieceAlignment, config: ScheduleConfig, state: LatentState | None = None,
        snapshots: bool = True) -> Trajectory:
    if state is None:
        state = init_latent(align.n_tokens, config.grid_side, config.rng_seed)
    drift_rng = np.random.default_rng([config.rng_seed, 1])

    def snap(st):
        if snapshots and config.snapshot_every > 0 and st.step % config.snapshot_every == 0:
            return render_maps(st).maps.copy()
        return None

    traj = Trajectory(roots=tuple(e[0].root_noun for e in sets), align=align)
    traj.records.append(StepRecord(0, _loss(state, sets, align), maps=snap(state)))
    for t in range(1, config.total_steps + 1):
        if t <= config.intervention_steps:
            state, report, ok, alpha = update_step(state, sets, align, config)
            if not ok:
                logger.debug("step %d: loss increased", t)
        else:
            state = LatentState(state.z, state.n_tokens, state.grid_side, t)
            ok, alpha = None, None
        state = _drift(state, drift_rng, config.drift_stddev)
        if config.drift_stddev or t > config.intervention_steps:
            report = _loss(state, sets, align)
        traj.records.append(StepRecord(t, report, ok, alpha, snap(state)))
    traj.final_state = state
    return traj


def separation_metrics(traj: Trajectory) -> dict:
    """Per-step separation summary.

    ``pair`` is the mean bound-pair distance, ``unmatched`` the mean
    pair-to-unmatched distance (empty when no set has unmatched words),
    ``ratio`` their quotient, and ``collisions`` counts entity-noun pairs
    whose maps peak on the same patch (needs map snapshots).
    """
    if not traj.records:
        raise ValueError("empty trajectory")
    pair, unmatched, ratio, collisions = [], [], [], []
    for rec in traj.records:
        pd = [d for _, d in rec.report.per_pair]
        ud = [d for _, d in rec.report.per_unmatched]
        p = float(np.mean(pd)) if pd else 0.0
        pair.append(p)
        if ud:
            u = float(np.mean(ud))
            unmatched.append(u)
            ratio.append(p / u if u > 0 else float("inf"))
        if rec.maps is not None and traj.align is not None:
            collisions.append((rec.step, argmax_collisions(rec.maps, traj.roots, traj.align)))
    return {
        "steps": [r.step for r in traj.records],
        "pair": pair,
        "unmatched": unmatched,
        "ratio": ratio,
        "has_unmatched": bool(unmatched),
        "collisions": collisions,
    }


def argmax_collisions(maps, roots, align: PieceAlignment) -> int:
    peaks = [int(np.argmax(maps[align[r][0]])) for r in roots]
    return sum(1 for i in range(len(peaks)) for j in range(i + 1, len(peaks)) if peaks[i] == peaks[j])


def mean_distances(maps, sets, align) -> tuple[float, float]:
    """Mean bound-pair and mean pair-to-unmatched distance for one map tensor."""
    pd, ud = [], []
    for entry in sets:
        pairs, unmatched = entry[1], entry[2]
        for m, n in pairs:
            pd.append(sym_kl(maps[align[m][0]], maps[align[n][0]]))
            for u in unmatched:
                ud.append(0.5 * (sym_kl(maps[align[m][0]], maps[align[u][0]])
                                 + sym_kl(maps[align[u][0]], maps[align[n][0]])))
    return (float(np.mean(pd)) if pd else 0.0, float(np.mean(ud)) if ud else 0.0)


# ---------------------------------------------------------------------------
# export


def write_pgm(path, grid: np.ndarray) -> None:
    """ASCII 16-bit PGM (P2), values scaled so the maximum maps to 65535."""
    grid = np.asarray(grid, dtype=float)
    peak = grid.max()
    scaled = np.zeros(grid.shape, dtype=int) if peak <= 0 else np.rint(grid / peak * 65535).astype(int)
    h, w = scaled.shape
    lines = ["P2", f"{w} {h}", "65535"]
    lines += [" ".join(str(v) for v in row) for row in scaled]
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_snapshots(traj: Trajectory, out_dir, grid_side: int) -> list[str]:
    """One PGM per token per snapshot step: ``tok{index}_step{t}.pgm``.

    ``index`` is the tensor row.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for rec in traj.records:
        if rec.maps is None:
            continue
        for i, row in enumerate(rec.maps):
            path = os.path.join(out_dir, f"tok{i}_step{rec.step}.pgm")
            write_pgm(path, row.reshape(grid_side, grid_side))
            written.append(path)
    return written
