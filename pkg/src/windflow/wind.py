"""Wind modeling: speed distributions, turbine power curves, scenario trees.

The pipeline: fit a Weibull or Rayleigh distribution to speed measurements;
map speeds through piecewise-linear turbine power curves; draw a small set of
per-farm output levels by stratified quantile sampling (quantiles
(j - 1/2) / n with a seeded +-5% per-turbine speed jitter); take the cartesian
product across farms to build the scenario set.  The probability of a
combined scenario is the product over farms of the farm's normalized weight,
where a farm's weight for one of its levels is the sum of the fitted density
evaluated at each turbine's sampled speed:

    pi_j = prod_e  [ sum_{t in e} pdf(U_{t,je(j)}) ]
                   / [ sum_{je in Je} sum_{t in e} pdf(U_{t,je}) ]

Farms are treated as independent; the last farm's level index cycles fastest
in the combined ordering (scenario 2 differs from scenario 1 only in the last
farm's level).

Farm-level availability in per-unit: p_max = (1 - wake_loss) * total output,
q_max = p_max * tan(acos(power_factor_min)), q_min = -q_max, p_min = 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .grid import GridCase

SCENARIO_FORMAT = "windflow-scenarios/1"

FAMILIES = ("weibull", "rayleigh")


class WindError(ValueError):
    """Bad measurements, curves or scenario documents."""


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindDistribution:
    """Fitted speed distribution; rayleigh is the shape = 2 special case."""

    family: str
    shape: float
    scale: float

    def _frozen(self):
        if self.family == "weibull":
            return stats.weibull_min(self.shape, loc=0.0, scale=self.scale)
        return stats.rayleigh(loc=0.0, scale=self.scale)

    def pdf(self, u):
        return self._frozen().pdf(u)

    def ppf(self, q):
        return self._frozen().ppf(q)

    def mean(self) -> float:
        return float(self._frozen().mean())

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._frozen().rvs(size=n, random_state=rng)


def fit_distribution(samples, family: str = "weibull") -> WindDistribution:
    """Max-likelihood fit with the location pinned at zero.

    Requires at least 30 strictly positive, non-degenerate samples; speeds
    are physical magnitudes, so zero/negative values are rejected rather than
    silently clipped.
    """
    u = np.asarray(samples, dtype=float)
    if family not in FAMILIES:
        raise WindError(f"unknown distribution family {family!r}")
    if u.ndim != 1 or u.size < 30:
        raise WindError(f"need at least 30 speed samples, got {u.size}")
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise WindError("speed samples must be finite and strictly positive")
    if np.ptp(u) == 0:
        raise WindError("degenerate sample: all speeds identical")
    if family == "weibull":
        shape, _, scale = stats.weibull_min.fit(u, floc=0.0)
        return WindDistribution("weibull", float(shape), float(scale))
    _, scale = stats.rayleigh.fit(u, floc=0.0)
    return WindDistribution("rayleigh", 2.0, float(scale))


def synthetic_speeds(shape: float, scale: float, n: int, seed: int) -> np.ndarray:
    """Weibull(shape, scale) draws; stand-in for on-site measurements."""
    rng = np.random.default_rng(seed)
    return stats.weibull_min.rvs(shape, loc=0.0, scale=scale, size=n,
                                 random_state=rng)


# ---------------------------------------------------------------------------
# power curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerCurve:
    """Piecewise-linear speed -> output (MW) curve for one turbine model."""

    model: str
    speeds: tuple[float, ...]
    powers_mw: tuple[float, ...]

    @property
    def rated_mw(self) -> float:
        return max(self.powers_mw)

    @property
    def cut_out(self) -> float:
        return self.speeds[-1]


def make_curve(model: str, points) -> PowerCurve:
    pts = sorted((float(s), float(p)) for s, p in points)
    speeds = tuple(s for s, _ in pts)
    powers = tuple(p for _, p in pts)
    if len(speeds) < 2:
        raise WindError(f"curve {model!r}: need at least two points")
    if any(b <= a for a, b in zip(speeds, speeds[1:])):
        raise WindError(f"curve {model!r}: speeds must be strictly increasing")
    if any(p < 0 for p in powers):
        raise WindError(f"curve {model!r}: negative power")
    return PowerCurve(model, speeds, powers)


def power_output(curve: PowerCurve, speed) -> np.ndarray | float:
    """Interpolated output; zero below the first point and past cut-out."""
    out = np.interp(speed, curve.speeds, curve.powers_mw, left=0.0, right=0.0)
    return float(out) if np.isscalar(speed) else out


def load_power_curve(text: str, model: str) -> PowerCurve:
    """Parse the two-column `speed,power` CSV (header required)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header[:2]] != ["speed", "power"]:
        raise WindError(f"curve {model!r}: expected header 'speed,power'")
    pts = []
    for row in reader:
        if not row or not row[0].strip():
            continue
        try:
            pts.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError) as exc:
            raise WindError(f"curve {model!r}: bad row {row!r}") from exc
    return make_curve(model, pts)


def bundled_curve(model: str) -> PowerCurve:
    """Power curve shipped with the package (data/<model>.csv)."""
    from importlib import resources

    ref = resources.files("windflow").joinpath(f"data/{model}.csv")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise WindError(f"no bundled power curve for model {model!r}") from None
    return load_power_curve(text, model)


def resolve_curves(case: GridCase,
                   extra: dict[str, PowerCurve] | None = None) -> dict[str, PowerCurve]:
    """One curve per turbine model used in the case (extra overrides bundled)."""
    out = dict(extra or {})
    for farm in case.wind_farms:
        for model, _ in farm.turbines:
            if model not in out:
                out[model] = bundled_curve(model)
    return out


# ---------------------------------------------------------------------------
# per-farm draws and the combined scenario set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FarmDraws:
    """Stratified output levels of one farm: speeds (levels x turbines),
    aggregate MW per level, and raw stratum weights (normalized on demand)."""

    farm_id: str
    speeds: np.ndarray
    total_mw: np.ndarray
    weights: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    @property
    def n_levels(self) -> int:
        return len(self.total_mw)


def _farm_rng(seed: int, farm_id: str) -> np.random.Generator:
    # per-farm child stream: stable across farm ordering and platforms
    return np.random.default_rng([seed, zlib.crc32(farm_id.encode())])


def farm_scenarios(farm, dist: WindDistribution, n_levels: int,
                   curves: dict[str, PowerCurve], seed: int,
                   jitter: float = 0.05) -> FarmDraws:
    """Draw one farm's output levels.

    Level speeds are the distribution quantiles at (j - 1/2) / n; each turbine
    sees the level speed scaled by a uniform factor in [1 - jitter, 1 + jitter]
    (same factors across levels, drawn once per turbine from the seeded
    stream).  A level's weight sums the fitted density over turbine speeds.
    """
    if n_levels < 1:
        raise WindError(f"farm {farm.id}: scenario count must be >= 1")
    models = [m for m, cnt in farm.turbines for _ in range(cnt)]
    for m in models:
        if m not in curves:
            raise WindError(f"farm {farm.id}: no power curve for model {m!r}")
    rng = _farm_rng(seed, farm.id)
    factors = 1.0 + jitter * rng.uniform(-1.0, 1.0, size=len(models))
    base = dist.ppf((np.arange(1, n_levels + 1) - 0.5) / n_levels)
    speeds = np.outer(base, factors)                        # levels x turbines
    power = np.zeros_like(speeds)
    for t, m in enumerate(models):
        power[:, t] = power_output(curves[m], speeds[:, t])
    weights = dist.pdf(speeds).sum(axis=1)
    if not np.all(weights > 0):
        raise WindError(f"farm {farm.id}: zero-density speed level; "
                        "check the fitted distribution against the curve range")
    return FarmDraws(farm.id, speeds, power.sum(axis=1), weights)


@dataclass(frozen=True)
class ScenarioSet:
    """Combined wind scenarios: probabilities (J,) and per-farm availability
    arrays (J, E) in per-unit.  Column order follows farm_ids."""

    farm_ids: tuple[str, ...]
    probabilities: np.ndarray
    p_max: np.ndarray
    q_max: np.ndarray
    per_farm_levels: tuple[int, ...] = ()

    @property
    def card(self) -> int:
        return len(self.probabilities)

    @property
    def q_min(self) -> np.ndarray:
        return -self.q_max

    def farm_col(self, farm_id: str) -> int:
        return self.farm_ids.index(farm_id)

    def subset(self, indices) -> "ScenarioSet":
        idx = np.asarray(indices, dtype=int)
        return ScenarioSet(self.farm_ids, self.probabilities[idx],
                           self.p_max[idx], self.q_max[idx],
                           self.per_farm_levels)


def combine(case: GridCase, draws: list[FarmDraws]) -> ScenarioSet:
    """Cartesian product of farm levels (last farm cycling fastest)."""
    by_id = {d.farm_id: d for d in draws}
    missing = [f.id for f in case.wind_farms if f.id not in by_id]
    if missing:
        raise WindError(f"no draws for farms: {', '.join(missing)}")
    farms = list(case.wind_farms)
    if not farms:
        raise WindError("case has no wind farms")
    s = case.s_base_mva

    counts = [by_id[f.id].n_levels for f in farms]
    grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    level_of = np.stack([g.ravel() for g in grids], axis=1)   # J x E

    J = level_of.shape[0]
    probs = np.ones(J)
    p_max = np.zeros((J, len(farms)))
    q_max = np.zeros_like(p_max)
    for e, f in enumerate(farms):
        d = by_id[f.id]
        lv = level_of[:, e]
        probs *= d.probs[lv]
        avail = (1.0 - f.wake_loss) * d.total_mw[lv] / s
        p_max[:, e] = avail
        q_max[:, e] = avail * math.tan(math.acos(f.power_factor_min))
    probs /= probs.sum()
    return ScenarioSet(tuple(f.id for f in farms), probs, p_max, q_max,
                       tuple(counts))


def expected_scenario(scn: ScenarioSet) -> ScenarioSet:
    """Single probability-1 scenario at the expected availability per farm."""
    w = scn.probabilities
    return ScenarioSet(scn.farm_ids, np.array([1.0]),
                       (w @ scn.p_max)[None, :], (w @ scn.q_max)[None, :],
                       tuple(1 for _ in scn.farm_ids))


# ---------------------------------------------------------------------------
# scenario file I/O
# ---------------------------------------------------------------------------

def scenarios_to_json(scn: ScenarioSet, indent: int | None = 2) -> str:
    rows = []
    for j in range(scn.card):
        rows.append({
            "j": j + 1,
            "pi": float(scn.probabilities[j]),
            "farms": {fid: {"p_max_pu": float(scn.p_max[j, e]),
                            "q_max_pu": float(scn.q_max[j, e])}
                      for e, fid in enumerate(scn.farm_ids)},
        })
    return json.dumps({"format": SCENARIO_FORMAT, "scenarios": rows},
                      indent=indent)


def load_scenarios(text: str) -> ScenarioSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WindError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SCENARIO_FORMAT:
        raise WindError(f"unsupported scenario format "
                        f"(expected {SCENARIO_FORMAT!r})")
    rows = doc.get("scenarios", [])
    if not rows:
        raise WindError("scenario file contains no scenarios")
    farm_ids = tuple(rows[0]["farms"].keys())
    J = len(rows)
    probs = np.zeros(J)
    p_max = np.zeros((J, len(farm_ids)))
    q_max = np.zeros_like(p_max)
    for i, raw in enumerate(sorted(rows, key=lambda r: r["j"])):
        probs[i] = float(raw["pi"])
        if tuple(raw["farms"].keys()) != farm_ids:
            raise WindError(f"scenario {raw['j']}: inconsistent farm set")
        for e, fid in enumerate(farm_ids):
            p_max[i, e] = float(raw["farms"][fid]["p_max_pu"])
            q_max[i, e] = float(raw["farms"][fid]["q_max_pu"])
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise WindError(f"scenario probabilities sum to {total!r}, not 1")
    if np.any(probs < 0) or np.any(p_max < 0):
        raise WindError("negative probability or availability")
    return ScenarioSet(farm_ids, probs, p_max, q_max)


def generate_scenarios(case: GridCase, speeds, per_farm: list[int],
                       seed: int, family: str = "weibull",
                       curves: dict[str, PowerCurve] | None = None) -> ScenarioSet:
    """Measurements-to-scenarios convenience wrapper (fit, draw, combine)."""
    farms = list(case.wind_farms)
    if len(per_farm) == 1 and len(farms) > 1:
        per_farm = per_farm * len(farms)
    if len(per_farm) != len(farms):
        raise WindError(f"per-farm counts ({len(per_farm)}) do not match the "
                        f"case's wind farms ({len(farms)})")
    dist = fit_distribution(speeds, family)
    all_curves = resolve_curves(case, curves)
    draws = [farm_scenarios(f, dist, n, all_curves, seed)
             for f, n in zip(farms, per_farm)]
    return combine(case, draws)
