"""Seeded Monte Carlo harness: subsampling sweeps and the attack matrix."""

from __future__ import annotations

import io as _stdio
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import ATTACK_KINDS, AttackSpec
from .binarize import top_m_mask
from .core import ConfigError, derive_rng, derive_seed, make_speckles
from .ghost import MeasurementConfig, block_sums, measure, prefix_unit_scores, upsample
from .patterns import make_regular_pattern, parse_ratio
from .protocol import SessionConfig, run_session

__all__ = [
    "REFERENCE_RATIOS",
    "default_grid",
    "SweepResult",
    "sweep_subsampling",
    "AttackTable",
    "attack_matrix",
]

REFERENCE_RATIOS = ("1:1", "13:3", "31:2")


def default_grid(start: float = 0.01, stop: float = 0.40, step: float = 0.01) -> list[float]:
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


@dataclass
class SweepResult:
    """Exact-recovery counts per (fragment ratio, sampling ratio).

    ``successes[i, k]`` counts the trials in which the fragment with
    0-to-1 ratio ``fragment_ratios[i]`` was recovered exactly from
    ``Ns[k]`` measurements.  The limit of a fragment is the smallest swept
    sampling ratio whose success rate reaches ``threshold``.
    """

    nu: int
    p: int
    q: int
    fragment_ratios: list
    bright_counts: list
    grid: list
    Ns: list
    trials: int
    threshold: float
    successes: np.ndarray
    seed: int = 0
    notes: list = field(default_factory=list)

    @property
    def rates(self) -> np.ndarray:
        return self.successes / self.trials

    @property
    def limits(self) -> list:
        out = []
        for row in self.rates:
            hits = np.flatnonzero(row >= self.threshold - 1e-12)
            out.append(self.grid[hits[0]] if hits.size else None)
        return out

    def monotonicity_violations(self, sigmas: float = 3.0) -> list[str]:
        """Adjacent grid points where the rate drops by more than ``sigmas``
        binomial standard errors."""
        problems = []
        for i, row in enumerate(self.rates):
            for k in range(len(row) - 1):
                a, b = row[k], row[k + 1]
                pbar = (a + b) / 2
                se = math.sqrt(max(pbar * (1 - pbar), 1e-12) * 2 / self.trials)
                if a - b > sigmas * se:
                    problems.append(
                        f"{self.fragment_ratios[i]}: rate falls {a:.2f} -> {b:.2f} "
                        f"between {self.grid[k]:.2f} and {self.grid[k + 1]:.2f}"
                    )
        return problems

    def sparsity_exceptions(self) -> list[str]:
        """Fragments whose limit is not below that of every denser fragment."""
        order = np.argsort(self.bright_counts)[::-1]
        problems = []
        prev = None
        for i in order:
            lim = self.limits[i]
            if prev is not None and lim is not None and prev[1] is not None and lim > prev[1]:
                problems.append(
                    f"limit of {self.fragment_ratios[i]} ({lim:.2f}) exceeds that of denser {prev[0]} ({prev[1]:.2f})"
                )
            prev = (self.fragment_ratios[i], lim)
        return problems

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        buf.write("nu,fragment_ratio,bright_count,sampling_ratio,N,trials,successes,rate\n")
        for i, ratio in enumerate(self.fragment_ratios):
            for k, r in enumerate(self.grid):
                buf.write(
                    f"{self.nu},{ratio},{self.bright_counts[i]},{r:.4f},{self.Ns[k]},"
                    f"{self.trials},{int(self.successes[i, k])},{self.rates[i, k]:.4f}\n"
                )
        return buf.getvalue()

    def limits_csv(self) -> str:
        buf = _stdio.StringIO()
        buf.write("nu,fragment_ratio,bright_count,threshold,limit\n")
        for ratio, m, lim in zip(self.fragment_ratios, self.bright_counts, self.limits):
            buf.write(f"{self.nu},{ratio},{m},{self.threshold},{'' if lim is None else f'{lim:.4f}'}\n")
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        """One data block per fragment ratio, separated by two blank lines."""
        blocks = []
        for i, ratio in enumerate(self.fragment_ratios):
            lines = [f"# nu={self.nu} fragment_ratio={ratio} bright={self.bright_counts[i]}", "# sampling_ratio rate"]
            lines += [f"{r:.4f} {self.rates[i, k]:.4f}" for k, r in enumerate(self.grid)]
            blocks.append("\n".join(lines))
        return "\n\n\n".join(blocks) + "\n"


def _sweep_trial(args):
    trial, nu, p, q, shape, patterns, Ns, seed, noise_sigma, profile = args
    rows, cols = q * nu, p * nu
    n_max = max(Ns)
    speckles = make_speckles(n_max, (rows, cols), derive_seed(seed, "sweep", nu, trial))
    counts = block_sums(speckles.matrices, nu).reshape(n_max, p * q)
    cfg = MeasurementConfig(n_max, nu, noise_sigma, profile)
    out = np.zeros((len(patterns), len(Ns)), dtype=bool)
    for i, pattern in enumerate(patterns):
        buckets = measure(upsample(pattern, nu), speckles, cfg, derive_rng(seed, "sweep-noise", nu, trial, i))
        scores = prefix_unit_scores(buckets, counts, Ns)
        m = int(pattern.sum())
        truth = pattern.ravel()
        for k in range(len(Ns)):
            out[i, k] = np.array_equal(top_m_mask(scores[k], m), truth)
    return out


def sweep_subsampling(
    fragment_ratios=REFERENCE_RATIOS,
    grid=None,
    trials: int = 100,
    nu: int = 8,
    p: int = 8,
    q: int = 8,
    shape: str = "rhombus",
    threshold: float = 1.0,
    seed: int = 0,
    noise_sigma: float = 0.0,
    source_profile=None,
    workers: int = 1,
) -> SweepResult:
    """Sorting-method recovery rate against sampling ratio.

    Each trial draws one speckle set of the largest swept length; smaller
    sampling ratios use its leading matrices, which is exactly the speckle
    set a session of that length would share.  A trial succeeds at a given
    length when sorting recovers the fragment cell for cell.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if not 0 < threshold <= 1:
        raise ConfigError("threshold must lie in (0, 1]")
    grid = default_grid() if grid is None else sorted(float(r) for r in grid)
    pixels = p * nu * q * nu
    Ns = [max(2, int(math.floor(r * pixels + 0.5))) for r in grid]
    ratios = [f"{d}:{b}" for d, b in (parse_ratio(r) for r in fragment_ratios)]
    patterns = [make_regular_pattern(shape, p, q, r) for r in ratios]
    profile = None if source_profile is None else np.asarray(source_profile, dtype=np.float64)
    jobs = [(k, nu, p, q, shape, patterns, Ns, seed, noise_sigma, profile) for k in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_trial, jobs))
    else:
        results = [_sweep_trial(job) for job in jobs]
    successes = np.sum(results, axis=0).astype(np.int64)
    result = SweepResult(
        nu=nu,
        p=p,
        q=q,
        fragment_ratios=ratios,
        bright_counts=[int(x.sum()) for x in patterns],
        grid=list(grid),
        Ns=Ns,
        trials=trials,
        threshold=threshold,
        successes=successes,
        seed=seed,
    )
    result.notes = result.monotonicity_violations() + result.sparsity_exceptions()
    return result


@dataclass
class AttackTable:
    N: int
    fraction: float
    trials: int
    target_user: int
    detections: dict
    baseline_attacked: int
    control_N: int | None = None
    control_authentic: int | None = None
    control_trials: int = 0

    def rate(self, kind: str) -> float:
        return self.detections[kind] / self.trials

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        buf.write("scenario,N,fraction,trials,attacked,rate\n")
        for kind, n in self.detections.items():
            buf.write(f"{kind},{self.N},{self.fraction},{self.trials},{n},{n / self.trials:.4f}\n")
        buf.write(f"none,{self.N},0,{self.trials},{self.baseline_attacked},{self.baseline_attacked / self.trials:.4f}\n")
        if self.control_N is not None:
            attacked = self.control_trials - self.control_authentic
            buf.write(
                f"control,{self.control_N},0,{self.control_trials},{attacked},"
                f"{attacked / self.control_trials:.4f}\n"
            )
        return buf.getvalue()


def _attack_trial(args):
    base, kinds, fraction, target, trial, seed = args
    cfg = replace(base, seed=derive_seed(seed, "attack-matrix", trial), attack=None)
    row = {"none": not run_session(cfg).authentic}
    for kind in kinds:
        spec = AttackSpec(kind, fraction, target)
        row[kind] = not run_session(replace(cfg, attack=spec)).authentic
    return row


def _control_trial(args):
    base, trial, seed = args
    cfg = replace(base, seed=derive_seed(seed, "attack-control", trial), attack=None)
    return run_session(cfg).authentic


def attack_matrix(
    base: SessionConfig,
    kinds=ATTACK_KINDS,
    trials: int = 100,
    fraction: float = 0.01,
    target_user: int = 2,
    seed: int = 0,
    control_N: int | None = 4096,
    workers: int = 1,
) -> AttackTable:
    """Detection rate of each attack over seeded sessions.

    Every trial runs the clean session and one attacked copy per kind with
    the same seed, so the rows differ only by the attack.  The control runs
    clean sessions at ``control_N`` measurements.
    """
    kinds = tuple(AttackSpec(k).kind for k in kinds)
    jobs = [(base, kinds, fraction, target_user, k, seed) for k in range(trials)]
    control_jobs = []
    if control_N is not None:
        control_base = replace(base, N=control_N, attack=None)
        control_jobs = [(control_base, k, seed) for k in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_attack_trial, jobs))
            control = list(pool.map(_control_trial, control_jobs))
    else:
        rows = [_attack_trial(j) for j in jobs]
        control = [_control_trial(j) for j in control_jobs]
    return AttackTable(
        N=base.N,
        fraction=fraction,
        trials=trials,
        target_user=target_user,
        detections={k: sum(r[k] for r in rows) for k in kinds},
        baseline_attacked=sum(r["none"] for r in rows),
        control_N=control_N,
        control_authentic=sum(control) if control_N is not None else None,
        control_trials=len(control_jobs),
    )
