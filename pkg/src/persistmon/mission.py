"""Closed-loop persistent monitoring: plan, route, sample, learn, re-estimate.

One *epoch* is the stretch between two hyperparameter re-estimates. Within
an epoch the vehicle may run several plans; ``rho`` is the fraction of the
BV capacity filled by fresh additions since the last re-estimate, and once
it exceeds the threshold the kernel is re-learned from the BV-set, the
posterior rebuilt, the rest of the current path dropped and a new plan made.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import full_gp, planner, route, sogp
from .errors import ContractError, NumericalError
from .field_io import FieldRaster

log = logging.getLogger(__name__)

PRIOR_STREAM = 1
NOISE_STREAM = 2


@dataclass(frozen=True)
class MissionConfig:
    launch: tuple = (29, 77)
    waypoints_per_plan: int = 4
    bv_capacity: int = 100
    rho_threshold: float = 0.6
    sample_stride: int = 4
    prior_random_samples: int = 50
    max_samples: int = 2000
    rng_seed: int = 0
    planner_dims: tuple = (12, 12)
    novelty_threshold: float = None
    relative_novelty: float = 1e-3
    measurement_noise: float = 0.0
    optimizer: full_gp.OptimizerConfig = field(default_factory=full_gp.OptimizerConfig)

    def __post_init__(self):
        object.__setattr__(self, "launch", tuple(float(v) for v in self.launch))
        object.__setattr__(self, "planner_dims", tuple(int(v) for v in self.planner_dims))
        if not 0.0 <= self.rho_threshold:
            raise ContractError("rho_threshold must be >= 0")
        for name in ("waypoints_per_plan", "bv_capacity", "sample_stride"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        for name in ("prior_random_samples", "max_samples"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")
        if self.measurement_noise < 0:
            raise ContractError("measurement_noise must be >= 0")


@dataclass(frozen=True)
class MetricSample:
    sample_index: int
    mse: float
    mean_variance: float
    epoch: int


@dataclass
class ReestimateEvent:
    sample_index: int
    epoch: int
    additions: int
    rho: float
    hyper_before: object
    hyper_after: object
    trace: list
    rho_after: float = 0.0


@dataclass
class Plan:
    selection: planner.SelectionResult
    path: route.Path
    completed: bool = False
    samples: int = 0


@dataclass
class EpochRecord:
    epoch: int
    hyper: object
    plans: list = field(default_factory=list)
    additions: int = 0
    first_sample: int = 0
    last_sample: int = -1
    bv_state: sogp.SogpState = None
    mean_map: FieldRaster = None
    var_map: FieldRaster = None


@dataclass
class MissionState:
    position: np.ndarray
    sogp: sogp.SogpState
    rho: float = 0.0
    churn: int = 0
    epoch: int = 0
    samples: int = 0
    history: list = field(default_factory=list)
    reestimates: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    prior_samples: int = 0


class MissionError(NumericalError):
    """A numerical failure inside the loop, with mission context attached.

    ``state`` holds the partial :class:`MissionState` when raised by :func:`run`.
    """

    state = None


def rho_update(state, outcome, m):
    """Count a BV addition (plain or followed by a deletion) and refresh ``rho``."""
    if m < 1:
        raise ContractError("m must be >= 1")
    if outcome.added:
        state.churn += 1
    state.rho = min(1.0, state.churn / m)
    return state.rho


class _Evaluator:
    """Caches the ocean-cell coordinates used for map-wide metrics."""

    def __init__(self, fld):
        self.field = fld
        self.cells = fld.ocean_cells()
        self.points = self.cells.astype(float)
        self.truth = fld.values[~fld.mask]

    def __call__(self, s, maps=False):
        mean, var = sogp.predict_many(s, self.points)
        mse = float(np.mean((mean - self.truth) ** 2))
        mv = float(np.mean(var))
        if not maps:
            return mse, mv, None, None
        return (mse, mv, self._raster(mean), self._raster(var))

    def _raster(self, v):
        out = np.full(self.field.shape, np.nan)
        out[~self.field.mask] = v
        return FieldRaster(out, self.field.mask)


def metrics(s, fld):
    """Map-wide MSE and mean variance, plus mean and variance rasters."""
    return _Evaluator(fld)(s, maps=True)


def _field_at(schedule, sample_index):
    current = schedule[0][1]
    for start, fld in schedule:
        if sample_index >= start:
            current = fld
    return current


def run(fld, h0, cfg, schedule=None):
    """Execute one mission and return its final :class:`MissionState`.

    ``schedule`` optionally swaps the ground truth during the mission: a list
    of ``(first_sample_index, FieldRaster)`` pairs sorted by index. Sample
    indices count every SOGP update, prior seeds included.
    """
    schedule = sorted(schedule, key=lambda t: t[0]) if schedule else [(0, fld)]
    if not np.any(~fld.mask):
        raise ContractError("field has no ocean cells")
    if not fld.is_ocean(cfg.launch):
        raise ContractError(f"launch {cfg.launch} is not an ocean cell")
    evaluators = {id(f): _Evaluator(f) for _, f in schedule}

    scfg = sogp.SogpConfig(capacity=cfg.bv_capacity, novelty_threshold=cfg.novelty_threshold,
                           relative_novelty=cfg.relative_novelty)
    st = MissionState(np.array(cfg.launch), sogp.init(h0, scfg))
    prior_rng = np.random.default_rng([cfg.rng_seed, PRIOR_STREAM])
    noise_rng = np.random.default_rng([cfg.rng_seed, NOISE_STREAM])
    st.epochs.append(EpochRecord(0, h0))
    try:
        _loop(st, fld, cfg, schedule, evaluators, prior_rng, noise_rng)
    except MissionError as exc:
        exc.state = st
        raise
    return st


def _loop(st, fld, cfg, schedule, evaluators, prior_rng, noise_rng):
    record = st.epochs[-1]

    def measure(cell):
        truth = _field_at(schedule, st.samples)
        v = truth.sample(cell)
        if cfg.measurement_noise:
            v += cfg.measurement_noise * noise_rng.standard_normal()
        outcome = sogp.update(st.sogp, cell, v)
        st.samples += 1
        mse, mv, _, _ = evaluators[id(truth)](st.sogp)
        st.history.append(MetricSample(st.samples - 1, mse, mv, st.epoch))
        record.last_sample = st.samples - 1
        return outcome

    ocean = fld.ocean_cells()
    for idx in prior_rng.integers(0, len(ocean), size=cfg.prior_random_samples):
        measure(ocean[idx].astype(float))
    st.prior_samples = st.samples
    record.first_sample = st.samples

    grid = planner.build_plan_grid(fld, *cfg.planner_dims)
    n = min(cfg.waypoints_per_plan, len(grid) - 1)
    budget = st.prior_samples + cfg.max_samples
    visited = set()
    stalled = 0

    def close_epoch():
        truth = _field_at(schedule, max(st.samples - 1, 0))
        _, _, mean_map, var_map = evaluators[id(truth)](st.sogp, maps=True)
        record.bv_state = st.sogp.copy()
        record.mean_map, record.var_map = mean_map, var_map

    while st.samples < budget:
        if len(grid) - len(visited) < n:
            visited.clear()
        try:
            sel = planner.select_waypoints(st.sogp, grid, n, exclude=visited)
        except NumericalError as exc:
            raise MissionError(f"planning failed at sample {st.samples}, epoch {st.epoch}: {exc}") from exc
        path = route.route(st.position, sel.waypoints)
        plan = Plan(sel, path)
        record.plans.append(plan)
        replanned = False
        before = st.samples
        exhausted = False
        for a, b in path.legs:
            for cell in route.rasterize_leg(st.position, b, cfg.sample_stride):
                if np.array_equal(cell, np.round(st.position)):
                    continue
                if st.samples >= budget:
                    exhausted = True
                    break
                st.position = cell
                if not fld.is_ocean(cell):
                    continue
                try:
                    outcome = measure(cell)
                except NumericalError as exc:
                    raise MissionError(f"SOGP update failed at sample {st.samples}: {exc}") from exc
                if outcome.added:
                    record.additions += 1
                rho_update(st, outcome, cfg.bv_capacity)
                if st.rho > cfg.rho_threshold:
                    _reestimate(st, cfg)
                    close_epoch()
                    record = EpochRecord(st.epoch, st.sogp.hyper, first_sample=st.samples)
                    st.epochs.append(record)
                    visited.clear()
                    replanned = True
                    break
            if replanned or exhausted:
                break
            st.position = np.asarray(b, dtype=float)
            j = grid.index_of(b)
            if j is not None:
                visited.add(j)
        else:
            plan.completed = True
        plan.samples = st.samples - before
        if not replanned and st.samples >= budget:
            break
        # a plan over land-locked or already-occupied cells can yield nothing
        stalled = stalled + 1 if st.samples == before else 0
        if stalled > len(grid):
            raise MissionError(f"no samples collected over {stalled} consecutive plans")
    close_epoch()


def _reestimate(st, cfg):
    s = st.sogp
    before = s.hyper
    try:
        res = full_gp.optimize_hyperparameters(s.bv_points, s.bv_targets, before, cfg.optimizer)
        st.sogp = sogp.refit_from_bv(s, res.hyper)
    except NumericalError as exc:
        raise MissionError(f"re-estimate failed at sample {st.samples}, epoch {st.epoch}: {exc}") from exc
    ev = ReestimateEvent(st.samples - 1, st.epoch, st.churn, st.rho, before, res.hyper, res.trace)
    log.info("re-estimate at sample %d: additions=%d rho=%.3f theta=%s",
             ev.sample_index, ev.additions, ev.rho, np.round(res.hyper.to_vector(), 3))
    st.rho, st.churn = 0.0, 0
    ev.rho_after = st.rho
    st.reestimates.append(ev)
    st.epoch += 1


def mse_trend(history, window=50):
    """Trailing moving average of MSE, aligned with ``history``."""
    v = np.array([h.mse for h in history])
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty_like(v)
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def epoch_boundaries(st):
    """Sample index of the last sample in each epoch."""
    return [e.last_sample for e in st.epochs if e.last_sample >= 0]


def write_metrics_csv(history, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("sample_index,mse,mean_variance,epoch\n")
        for m in history:
            fh.write(f"{m.sample_index},{m.mse!r},{m.mean_variance!r},{m.epoch}\n")
