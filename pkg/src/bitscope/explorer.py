"""Two-pass per-part bit-width search.

Pass 1 walks the parts from the input side.  Each part tries candidate
representations in order of increasing hardware cost, with parts already
decided upstream and full precision downstream, and keeps the first one
whose accuracy stays within ``epsilon`` of the baseline.  Pass 2 revisits the
parts in the same order and lets each one widen its fields by a few bits
when that buys accuracy, with downstream parts at their pass-1 choices.

Hardware cost is an analytic area proxy (see :class:`CostModel`).
"""

from __future__ import annotations

import itertools
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import arrays
from .errors import ExplorationError, FormatError
from .nn.engine import (FULL_PRECISION, PartConfig, PartitionPlan, Runner, full_precision_configs,
                        predict_labels)
from .nn.model import Model
from .numerics import BinaryFormat, FixedFormat, FloatFormat
from .profiler import RangeProfile, required_exponent_bits, required_integral_bits
from .registry import FAMILIES, make_representation, parse_notation


# -- settings -----------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Weights of the area proxy: per multiplier-area unit, adder-area unit, stored weight bit."""

    multiplier: float = 1.0
    adder: float = 1.0
    storage: float = 1.0

    def __post_init__(self):
        vals = (self.multiplier, self.adder, self.storage)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ExplorationError("cost weights must be non-negative and not all zero")


@dataclass(frozen=True)
class ExplorerSettings:
    epsilon: float = 0.0
    pass2: bool = True
    extra_bits: int = 1
    families: tuple = ("FI", "FL", "H", "I")
    headroom: int = 3
    precision: tuple = (4, 12)
    truncation: tuple = (4, 6, 8)
    cost: CostModel = CostModel()
    eval_size: Optional[int] = None
    decouple: bool = False

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "precision", tuple(self.precision))
        object.__setattr__(self, "truncation", tuple(self.truncation))
        if not 0 <= self.epsilon < 1:
            raise ExplorationError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.headroom < 0 or self.extra_bits < 0:
            raise ExplorationError("headroom and extra_bits must be non-negative")
        lo, hi = self.precision
        if not 1 <= lo <= hi:
            raise ExplorationError(f"bad precision interval {self.precision}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ExplorationError(f"unknown families {bad}; choose from {', '.join(FAMILIES)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        d["precision"] = list(self.precision)
        d["truncation"] = list(self.truncation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExplorerSettings":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExplorationError(f"unknown settings {sorted(unknown)}")
        if "cost" in d:
            try:
                d["cost"] = CostModel(**d["cost"])
            except TypeError as exc:
                raise ExplorationError(f"bad cost weights: {exc}") from None
        try:
            return cls(**d)
        except TypeError as exc:
            raise ExplorationError(f"bad settings: {exc}") from None


# -- cost model ---------------------------------------------------------------

def mult_area(cfg: PartConfig) -> float:
    w, a = cfg.weight_format, cfg.act_format
    if isinstance(a, BinaryFormat):
        return 1.0
    if isinstance(a, FixedFormat):
        if cfg.multiply.startswith("drum:"):
            t = int(cfg.multiply[5:])
            # t x t core plus leading-one detectors and shifters per operand
            return float(t * t + 2 * w.width + 2 * a.width)
        return float(w.width * a.width)
    e = max(w.e, a.e)
    if cfg.multiply == "cfpu":
        return float(max(w.m, a.m) + 1 + 2 * (e + 1))
    return float((w.m + 1) * (a.m + 1) + e + 1)


def add_area(cfg: PartConfig) -> float:
    a = cfg.act_format
    if isinstance(a, BinaryFormat):
        return 1.0
    if isinstance(a, FixedFormat):
        return float(a.width)
    return float(3 * (a.m + 1) + 2 * (a.e + 1))


def part_ops(model: Model, plan: PartitionPlan) -> list:
    """(multiplies, adds, parameters) summed over each part's layers."""
    totals = [[0, 0, 0] for _ in range(plan.num_parts)]
    for li, counts in enumerate(model.op_counts()):
        for k in range(3):
            totals[plan.assignment[li]][k] += counts[k]
    return [tuple(t) for t in totals]


def part_cost(cfg: PartConfig, ops: tuple, weights: CostModel = CostModel()) -> float:
    mults, adds, params = ops
    return (mults * mult_area(cfg) * weights.multiplier + adds * add_area(cfg) * weights.adder
            + params * cfg.weight_format.width * weights.storage)


def cost(configs: Sequence[PartConfig], model: Model, plan: PartitionPlan,
         weights: CostModel = CostModel()) -> float:
    ops = part_ops(model, plan)
    return float(sum(part_cost(c, ops[c.part], weights) for c in configs))


# -- bit count intervals ------------------------------------------------------

@dataclass(frozen=True)
class BCI:
    part: int
    name: str
    integral: tuple
    exponent: tuple
    precision: tuple
    # range fields for weights when their format is decoupled from activations
    weight_integral: Optional[int] = None
    weight_exponent: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"part": self.part, "name": self.name, "integral": list(self.integral),
             "exponent": list(self.exponent), "precision": list(self.precision)}
        if self.weight_integral is not None:
            d["weight_integral"] = self.weight_integral
            d["weight_exponent"] = self.weight_exponent
        return d


def derive_bcis(profile: RangeProfile, settings: ExplorerSettings,
                num_parts: Optional[int] = None) -> list:
    """Range-field intervals start at the required bits and extend by ``headroom``."""
    n = len(profile.parts) if num_parts is None else num_parts
    if len(profile.parts) < n:
        raise ExplorationError(f"profile covers {len(profile.parts)} parts, plan has {n}")
    out = []
    for pid in range(n):
        p = profile.parts[pid]
        lo, hi = p.range
        if lo > hi:
            lo = hi = 0.0
        i0 = required_integral_bits(lo, hi)
        e0 = required_exponent_bits(lo, hi)
        wi = we = None
        if settings.decouple:
            wl, wh = min(p.w[0], p.b[0]), max(p.w[1], p.b[1])
            if wl > wh:
                wl = wh = 0.0
            wi, we = required_integral_bits(wl, wh), required_exponent_bits(wl, wh)
        out.append(BCI(pid, p.name, (i0, i0 + settings.headroom), (e0, e0 + settings.headroom),
                       tuple(settings.precision), wi, we))
    return out


# -- candidates ---------------------------------------------------------------

def _config(part: int, family: str, fields: tuple, bci: BCI, settings: ExplorerSettings):
    rep = make_representation(family, *fields)
    cfg = PartConfig.from_notation(part, rep)
    if settings.decouple and family != "BIN":
        if family in ("FI", "H"):
            wfmt = FixedFormat(bci.weight_integral, fields[1])
        else:
            wfmt = FloatFormat(bci.weight_exponent, fields[1])
        cfg = PartConfig(part, wfmt, rep.format, rep.multiply, rep.add)
    arrays.check_vector_format(cfg.weight_format)
    arrays.check_vector_format(cfg.act_format)
    return cfg


def _family_fields(family: str, bci: BCI, settings: ExplorerSettings):
    prec = range(bci.precision[0], bci.precision[1] + 1)
    if family == "BIN":
        yield ()
    elif family == "FI":
        yield from itertools.product(range(bci.integral[0], bci.integral[1] + 1), prec)
    elif family == "H":
        for i, f in itertools.product(range(bci.integral[0], bci.integral[1] + 1), prec):
            for t in settings.truncation:
                if 2 <= t <= i + f:
                    yield (i, f, t)
    else:
        yield from itertools.product(range(bci.exponent[0], bci.exponent[1] + 1), prec)


@dataclass(frozen=True)
class Candidate:
    config: PartConfig
    family: str
    fields: tuple
    cost: float

    @property
    def total_bits(self) -> int:
        return self.config.weight_format.width + self.config.act_format.width

    def sort_key(self, settings: ExplorerSettings):
        return (self.cost, self.total_bits, settings.families.index(self.family)
                if self.family in settings.families else len(FAMILIES), self.fields)


def _make_candidate(part, family, fields, bci, settings, ops) -> Optional[Candidate]:
    try:
        cfg = _config(part, family, fields, bci, settings)
    except FormatError:
        return None
    return Candidate(cfg, family, tuple(fields), part_cost(cfg, ops, settings.cost))


def enumerate_candidates(part: int, bci: BCI, settings: ExplorerSettings, ops: tuple) -> list:
    """Every grid point of the part's BCIs for each family, sorted by (cost, bits, family)."""
    cands = []
    for family in settings.families:
        for fields in _family_fields(family, bci, settings):
            c = _make_candidate(part, family, fields, bci, settings, ops)
            if c is not None:
                cands.append(c)
    cands.sort(key=lambda c: c.sort_key(settings))
    return cands


def neighborhood(selected: Candidate, bci: BCI, settings: ExplorerSettings, ops: tuple) -> list:
    """The selection plus same-family configs with each field widened by <= extra_bits."""
    out = [selected]
    if selected.family not in FAMILIES or not selected.fields:
        return out
    ranges = [range(v, v + settings.extra_bits + 1) for v in selected.fields]
    for fields in itertools.product(*ranges):
        if fields == selected.fields:
            continue
        if selected.family == "H" and fields[2] > fields[0] + fields[1]:
            continue
        c = _make_candidate(selected.config.part, selected.family, fields, bci, settings, ops)
        if c is not None:
            out.append(c)
    return out


# -- evaluation ---------------------------------------------------------------

Evaluator = Callable[[Sequence[PartConfig], int], float]


class DatasetEvaluator:
    """Accuracy of a config list on a fixed dataset.

    Inputs to each part are cached per upstream config prefix, so trying
    candidates for part ``p`` only reruns parts ``p`` onward.
    """

    def __init__(self, model: Model, plan: PartitionPlan, dataset, cache_size: int = 16):
        self.model = model
        self.plan = plan.check(model)
        self.images = np.asarray(dataset.images).reshape((-1,) + model.input_shape)
        self.labels = np.asarray(dataset.labels)
        if len(self.labels) == 0:
            raise ExplorationError("evaluation set is empty")
        self._cache: OrderedDict = OrderedDict()
        self.cache_size = cache_size
        self._lock = threading.Lock()

    def _run(self, configs, x, start, stop=None):
        runner = Runner(self.model, self.plan, configs)
        return np.concatenate([runner.run(x[i:i + 256], start, stop) for i in range(0, len(x), 256)])

    def _prefix_input(self, configs, part: int):
        key = tuple(configs[:part])
        if part == 0:
            return self.images
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        prev = self._prefix_input(configs, part - 1)
        x = self._run(self._padded(configs), prev, part - 1, part)
        self._cache[key] = x
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return x

    def _padded(self, configs):
        full = full_precision_configs(self.plan)
        return [configs[p] if p < len(configs) else full[p] for p in range(self.plan.num_parts)]

    def __call__(self, configs: Sequence[PartConfig], part: int = 0) -> float:
        configs = list(configs)
        with self._lock:
            x = self._prefix_input(configs, part)
        out = self._run(configs, x, part)
        pred = predict_labels(np.asarray(out, dtype=np.float64))
        return int(np.count_nonzero(pred == self.labels)) / len(self.labels)


# -- report -------------------------------------------------------------------

def config_to_dict(cfg: PartConfig) -> dict:
    return {"notation": cfg.notation, "weight_format": str(cfg.weight_format),
            "act_format": str(cfg.act_format), "multiply": cfg.multiply, "add": cfg.add}


def config_from_dict(part: int, d: dict) -> PartConfig:
    try:
        return PartConfig(part, parse_notation(d["weight_format"]).format,
                          parse_notation(d["act_format"]).format, d["multiply"], d["add"])
    except (KeyError, TypeError) as exc:
        raise ExplorationError(f"malformed config entry: {exc}") from None


@dataclass
class Trial:
    config: PartConfig
    accuracy: float
    cost: float

    def to_dict(self) -> dict:
        return {"config": self.config.notation, "accuracy": self.accuracy, "cost": self.cost}


@dataclass
class PassRecord:
    """Trials and the chosen config of one part in one pass."""

    trials: list = field(default_factory=list)
    selected: Optional[PartConfig] = None
    accuracy: Optional[float] = None
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return {"trials": [t.to_dict() for t in self.trials],
                "selected": config_to_dict(self.selected) if self.selected else None,
                "accuracy": self.accuracy, "warning": self.warning}


@dataclass
class ExplorationReport:
    plan: PartitionPlan
    settings: ExplorerSettings
    baseline: float
    bcis: list
    pass1: list
    pass2: Optional[list] = None
    pass1_accuracy: Optional[float] = None
    pass2_accuracy: Optional[float] = None
    final_accuracy: Optional[float] = None
    final_cost: Optional[float] = None
    eval_size: Optional[int] = None

    @property
    def threshold(self) -> float:
        return (1 - self.settings.epsilon) * self.baseline

    def selected(self, which: str = "final") -> list:
        recs = self.pass2 if (which == "final" and self.pass2) or which == "pass2" else self.pass1
        if recs is None:
            raise ExplorationError("pass 2 has not been run")
        return [r.selected for r in recs]

    def relative(self, acc: Optional[float]) -> Optional[float]:
        if acc is None or not self.baseline:
            return None
        return acc / self.baseline

    def to_dict(self) -> dict:
        parts = []
        for p, name in enumerate(self.plan.names):
            entry = {"part": p, "name": name, "bci": self.bcis[p].to_dict(),
                     "pass1": self.pass1[p].to_dict()}
            if self.pass2 is not None:
                entry["pass2"] = self.pass2[p].to_dict()
            parts.append(entry)
        final = self.selected("final")
        return {
            "kind": "exploration-report",
            "plan": self.plan.to_dict(),
            "settings": self.settings.to_dict(),
            "baseline_accuracy": self.baseline,
            "threshold": self.threshold,
            "eval_size": self.eval_size,
            "parts": parts,
            "pass1": {"configs": [c.notation for c in self.selected("pass1")],
                      "accuracy": self.pass1_accuracy,
                      "relative": self.relative(self.pass1_accuracy)},
            "pass2": None if self.pass2 is None else {
                "configs": [c.notation for c in self.selected("pass2")],
                "accuracy": self.pass2_accuracy,
                "relative": self.relative(self.pass2_accuracy)},
            "final": {"configs": [config_to_dict(c) for c in final],
                      "accuracy": self.final_accuracy,
                      "relative": self.relative(self.final_accuracy),
                      "cost": self.final_cost},
        }


def final_configs_from_report(d: dict) -> list:
    """Config list of the final selection stored in a report dict."""
    try:
        return [config_from_dict(p, c) for p, c in enumerate(d["final"]["configs"])]
    except (KeyError, TypeError) as exc:
        raise ExplorationError(f"malformed report: {exc}") from None


# -- passes -------------------------------------------------------------------

def _evaluate_batch(evaluator, config_lists, part, threads):
    if threads > 1 and len(config_lists) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda cl: evaluator(cl, part), config_lists))
    return [evaluator(cl, part) for cl in config_lists]


def explore_pass1(model: Model, plan: PartitionPlan, profile: RangeProfile,
                  settings: ExplorerSettings, evaluator: Evaluator,
                  threads: int = 1, candidates: Optional[list] = None) -> ExplorationReport:
    """Greedy minimum-cost selection per part subject to the accuracy bound.

    ``evaluator(configs, part)`` returns the accuracy of a full config list;
    ``part`` says which leading parts are unchanged since the last call.
    ``candidates`` optionally overrides the per-part candidate lists.
    """
    plan.check(model)
    ops = part_ops(model, plan)
    bcis = derive_bcis(profile, settings, plan.num_parts)
    full = full_precision_configs(plan)
    baseline = evaluator(full, 0)
    report = ExplorationReport(plan, settings, baseline, bcis, [])
    threshold = report.threshold
    chosen = list(full)
    for p in range(plan.num_parts):
        cands = candidates[p] if candidates is not None else enumerate_candidates(p, bcis[p], settings, ops[p])
        if not cands:
            raise ExplorationError(f"no candidates for part {plan.names[p]}")
        rec = PassRecord()
        step = max(1, threads)
        for s in range(0, len(cands), step):
            window = cands[s:s + step]
            lists = [chosen[:p] + [c.config] + full[p + 1:] for c in window]
            accs = _evaluate_batch(evaluator, lists, p, threads)
            for c, acc in zip(window, accs):
                rec.trials.append(Trial(c.config, acc, c.cost))
                if acc >= threshold:
                    rec.selected, rec.accuracy = c.config, acc
                    break
            if rec.selected is not None:
                break
        if rec.selected is None:
            rec.selected = full[p]
            rec.warning = (f"no candidate reached {threshold:.4f}; "
                           f"part {plan.names[p]} kept at {FULL_PRECISION}")
        chosen[p] = rec.selected
        report.pass1.append(rec)
    report.pass1_accuracy = evaluator(chosen, 0)
    report.final_cost = cost(chosen, model, plan, settings.cost)
    return report


def _candidate_of(cfg: PartConfig, ops, settings) -> Candidate:
    rep = cfg.representation()
    if rep is None:
        return Candidate(cfg, "", (), part_cost(cfg, ops, settings.cost))
    return Candidate(cfg, rep.family, rep.fields, part_cost(cfg, ops, settings.cost))


def explore_pass2(report: ExplorationReport, model: Model, plan: PartitionPlan,
                  settings: ExplorerSettings, evaluator: Evaluator,
                  threads: int = 1) -> ExplorationReport:
    """Accuracy-maximizing refinement within ``extra_bits`` of each pass-1 choice.

    Ties go to lower cost, then fewer total bits, then family order.
    """
    ops = part_ops(model, plan)
    pass1 = report.selected("pass1")
    chosen = list(pass1)
    records = []
    for p in range(plan.num_parts):
        rec = PassRecord()
        sel = _candidate_of(pass1[p], ops[p], settings)
        if report.pass1[p].warning is not None:
            cands = [sel]
        else:
            cands = neighborhood(sel, report.bcis[p], settings, ops[p])
        cands.sort(key=lambda c: c.sort_key(settings))
        lists = [chosen[:p] + [c.config] + pass1[p + 1:] for c in cands]
        accs = _evaluate_batch(evaluator, lists, p, threads)
        best = None
        for c, acc in zip(cands, accs):
            rec.trials.append(Trial(c.config, acc, c.cost))
            # candidates are already in tie-break order, so only strictly better wins
            if best is None or acc > best[1]:
                best = (c, acc)
        rec.selected, rec.accuracy = best[0].config, best[1]
        chosen[p] = rec.selected
        records.append(rec)
    report.pass2 = records
    report.pass2_accuracy = evaluator(chosen, 0)
    report.final_cost = cost(chosen, model, plan, settings.cost)
    return report


def explore(model: Model, plan: PartitionPlan, profile: RangeProfile, settings: ExplorerSettings,
            dataset, threads: int = 1) -> ExplorationReport:
    """Run pass 1 (and pass 2 if enabled) on ``dataset`` and re-evaluate the final plan."""
    data = dataset.take(settings.eval_size) if hasattr(dataset, "take") else dataset
    evaluator = DatasetEvaluator(model, plan, data)
    report = explore_pass1(model, plan, profile, settings, evaluator, threads)
    if settings.pass2:
        report = explore_pass2(report, model, plan, settings, evaluator, threads)
    # fresh evaluator: the recorded final accuracy never comes from a cache
    report.final_accuracy = DatasetEvaluator(model, plan, data)(report.selected("final"), 0)
    report.eval_size = len(data.labels)
    return report
