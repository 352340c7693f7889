"""Sections, potentials, invariant checks and event tracing.

Section ``i`` of a buffer is ``B[|B|-(i+1)K, |B|-iK)`` in descending order, so
the last (smallest-items) section has index ``C/K - 1`` and sections holding
the largest items may have negative indices when ``|B| > C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .compactor import NAIVE, AdaptiveCompactor, canonical_marking
from .errors import MarkingError
from .sketch import Sketch, level_bound

SQRT2 = math.sqrt(2.0)
P4_BOUND = 2.0 + SQRT2
REL_TOL = 1e-9

TAIL = "tail"
LEFT = "left"
RIGHT = "right"
HEAD = "head"


def _le(a: float, b: float) -> bool:
    """``a <= b`` up to the relative tolerance used for potential comparisons."""
    return a <= b + REL_TOL * max(1.0, abs(b))


def region_of(index: int, section_len: int, capacity: int) -> str:
    n_sections = capacity // section_len
    if index >= n_sections - 2:
        return HEAD
    if index >= n_sections // 2:
        return RIGHT
    return TAIL if index <= 0 else LEFT


def aux_potential(section_index: int, region: str, marked: bool, section_len: int,
                  capacity: int, full: bool = True) -> float:
    """Auxiliary potential of one section."""
    if not full:
        return 0.0
    if region in (LEFT, TAIL):
        base = 2.0 ** (section_index / 2)
        return base if marked else -SQRT2 * base
    cap_term = (1.0 + SQRT2) * 2.0 ** (capacity / (4 * section_len))
    if region == RIGHT:
        return 0.0 if marked else -cap_term
    return cap_term if marked else 0.0


@dataclass
class SectionLabel:
    index: int
    region: str
    state: str  # "marked", "unmarked" or "partial"


@dataclass
class PotentialReport:
    per_prefix: list  # (section index, prefix potential), ascending index
    total: float
    sections: list

    @property
    def within_prefix_bound(self) -> bool:
        return all(_le(phi, P4_BOUND * 2.0 ** (i / 2)) for i, phi in self.per_prefix)


def potential(compactor: AdaptiveCompactor, *, section_len: int | None = None,
              capacity: int | None = None, marking=None) -> PotentialReport:
    K = section_len or compactor.section_len
    C = capacity or compactor.capacity
    if marking is None:
        marking = canonical_marking(compactor, section_len=K, capacity=C)
    n = len(compactor)
    r = n % K
    n_full = n // K
    first = C // K - n_full  # index of the first full section
    marked = set()
    for _, start, stop in marking.ranges:
        for j in range((start - r) // K, (stop - r) // K):
            marked.add(first + j)
    sections = []
    per_prefix = []
    if r:
        sections.append(SectionLabel(first - 1, region_of(first - 1, K, C), "partial"))
        per_prefix.append((first - 1, 0.0))
    phi = 0.0
    for i in range(first, C // K):
        region = region_of(i, K, C)
        is_marked = i in marked
        phi = max(0.0, phi + aux_potential(i, region, is_marked, K, C))
        sections.append(SectionLabel(i, region, "marked" if is_marked else "unmarked"))
        per_prefix.append((i, phi))
    return PotentialReport(per_prefix, phi, sections)


# -- invariants ---------------------------------------------------------------------

INVARIANTS = ("I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8", "I9", "I10", "I11",
              "weight", "levels", "marker_budget")
# Reported but not part of ``ok``: after a compactor merge the marker lengths
# may legitimately exceed C/2 until the next compactions consume them.
SOFT = frozenset({"marker_budget"})


@dataclass
class Violation:
    invariant: str
    level: int | None
    detail: str

    def __str__(self):
        where = f"level {self.level}" if self.level is not None else "sketch"
        return f"{self.invariant} @ {where}: {self.detail}"


@dataclass
class InvariantReport:
    checked: dict = field(default_factory=lambda: {name: 0 for name in INVARIANTS})
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def failed(self, name: str) -> bool:
        return any(v.invariant == name for v in self.violations)

    def _check(self, name: str, cond: bool, level, detail) -> None:
        self.checked[name] += 1
        if not cond:
            found = Violation(name, level, detail() if callable(detail) else detail)
            (self.warnings if name in SOFT else self.violations).append(found)

    def merge(self, other: "InvariantReport") -> None:
        for k, v in other.checked.items():
            self.checked[k] = self.checked.get(k, 0) + v
        self.violations.extend(other.violations)
        self.warnings.extend(other.warnings)

    def summary(self) -> str:
        if self.ok:
            return "all invariants hold"
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        return f"{len(self.violations)} violation(s): {shown}{more}"

    def lines(self) -> list[str]:
        out = []
        for name in INVARIANTS:
            bad = [v for v in self.violations + self.warnings if v.invariant == name]
            status = "pass" if self.checked.get(name) else "n/a"
            if bad:
                status = "warn" if name in SOFT else "FAIL"
            out.append(f"{name:14s} {status:4s} checks={self.checked.get(name, 0)}")
            out.extend(f"    {v}" for v in bad[:10])
        return out


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


def check_compactor(comp: AdaptiveCompactor, level: int, report: InvariantReport, *,
                    k0: int, c0: int, delta: float, baseline=None) -> None:
    K, C = comp.section_len, comp.capacity
    report._check("I1", _is_pow2(K) and _is_pow2(C), level, lambda: f"K={K}, C={C}")
    ok2 = K <= k0 and C >= c0
    if baseline is not None:
        ok2 = ok2 and K <= baseline[1] and C >= baseline[0]
    report._check("I2", ok2, level, lambda: f"K={K}, C={C}, initial=({k0},{c0}), baseline={baseline}")
    report._check("I3", C >= 8 * K, level, lambda: f"C={C} < 8K={8 * K}")
    report._check("I4", C >= 32 * math.log(1.0 / delta), level,
                  lambda: f"C={C} < 32 ln(1/delta)={32 * math.log(1 / delta):.2f}")
    report._check("I5", C % (2 * K) == 0, level, lambda: f"C={C} not a multiple of 2K={2 * K}")
    bad = [m for m in comp.markers if m.length <= 0 or m.length % K]
    report._check("I9", not bad, level, lambda: f"marker lengths {[m.length for m in bad]} vs K={K}")
    ordered = all(a.ghost <= b.ghost for a, b in zip(comp.markers, comp.markers[1:]))
    try:
        marking = canonical_marking(comp)
    except MarkingError as exc:
        report._check("I11", False, level, str(exc))
    else:
        report._check("I11", ordered and marking.head_unmarked, level,
                      lambda: "marker stack out of order" if not ordered else
                      f"head marked: last range ends at {marking.ranges[-1][2]}, |B|={len(comp)}, K={K}")
    total = comp.marker_total()
    report._check("marker_budget", total <= C // 2, level,
                  lambda: f"marker lengths sum to {total} > C/2={C // 2}")


def check_invariants(sketch: Sketch, records=None, *, baseline=None, levels=None) -> InvariantReport:
    """Evaluate every checkable invariant on every (or the given) level.

    ``records`` are :class:`EventRecord` objects from an :class:`EventTrace`;
    the compaction-time invariants I7, I8 and I10 are read from them.
    ``baseline`` maps level -> (C, K) observed earlier, for the monotonicity check.
    """
    report = InvariantReport()
    p = sketch.params
    k0, c0 = p.k0, p.c0
    product = k0 * c0
    for h, comp in enumerate(sketch.levels):
        report._check("I6", comp.section_len * comp.capacity == product, h,
                      lambda: f"K*C={comp.section_len * comp.capacity} != {product}")
        if levels is not None and h not in levels:
            continue
        check_compactor(comp, h, report, k0=k0, c0=c0, delta=p.delta,
                        baseline=None if baseline is None else baseline.get(h))
    floor = 8 * math.log(1.0 / p.delta) / p.epsilon ** 2
    report._check("I6", product >= floor, None, lambda: f"K0*C0={product} < {floor:.2f}")
    weight = sum(len(c) << h for h, c in enumerate(sketch.levels))
    report._check("weight", weight <= sketch.n_items, None,
                  lambda: f"stored weight {weight} > N={sketch.n_items}")
    H = sketch.num_levels
    ok_levels = H >= 1
    if sketch.n_items >= c0:
        ok_levels = ok_levels and H <= level_bound(p.epsilon, sketch.n_items) + 1e-12
    report._check("levels", ok_levels, None,
                  lambda: f"H={H}, bound={level_bound(p.epsilon, max(sketch.n_items, 1)):.3f}")
    for rec in records or ():
        if rec.kind != "compact":
            continue
        report._check("I7", rec.i7_ok, rec.level, lambda: f"event {rec.index}: {rec.evidence}")
        report._check("I8", rec.i8_ok, rec.level, lambda: f"event {rec.index}: {rec.evidence}")
        if rec.i10_ok is not None:
            report._check("I10", rec.i10_ok, rec.level, lambda: f"event {rec.index}: {rec.evidence}")
    return report


def k_lower_bound_ok(comp: AdaptiveCompactor, c: float = 0.125) -> bool:
    """Empirical form of the section-length lower bound: K >= c*C / max(1, log2 P)."""
    logp = math.log2(comp.compaction_count) if comp.compaction_count > 1 else 1.0
    return comp.section_len >= c * comp.capacity / max(1.0, logp)


# -- event tracing -------------------------------------------------------------------

@dataclass(slots=True)
class EventRecord:
    index: int
    kind: str  # "insert", "compact" or "merge"
    level: int
    phi_before: float
    phi_after: float
    k_before: int
    c_before: int
    k_after: int
    c_after: int
    depth: int = 0
    compaction: str | None = None
    size: int = 0
    removed: int = 0
    params_changed: bool = False
    phi_pre_change: float | None = None
    i7_ok: bool | None = None
    i8_ok: bool | None = None
    i10_ok: bool | None = None
    evidence: str = ""


class EventTrace:
    """Observer that measures the potential around every sketch event.

    Attach with ``sketch.observer = trace``. Records accumulate in
    ``trace.records``; ``trace.drain()`` hands back and clears them.
    """

    def __init__(self):
        self.records: list[EventRecord] = []
        self._counter = 0

    def _add(self, rec: EventRecord) -> None:
        self.records.append(rec)

    def _next(self) -> int:
        self._counter += 1
        return self._counter

    def drain(self) -> list[EventRecord]:
        out = self.records
        self.records = []
        return out

    def before_insert(self, sketch, h, comp):
        return potential(comp).total, comp.section_len, comp.capacity

    def after_insert(self, sketch, h, comp, token):
        phi0, k0, c0 = token
        self._add(EventRecord(self._next(), "insert", h, phi0, potential(comp).total,
                              k0, c0, comp.section_len, comp.capacity, comp.depth))

    def before_compact(self, sketch, h, comp):
        marking = canonical_marking(comp)
        phi = potential(comp, marking=marking).total
        return phi, marking.marked_mask(), len(comp), comp.section_len, comp.capacity

    def after_compact(self, sketch, h, comp, token, outcome):
        phi0, mask, n, K, C = token
        T = outcome.size
        first_removed = 1 if T % 2 else 0
        tail_end = n - C + K  # descending positions below this lie on the tail
        i8 = T <= n - C // 2
        tail_after = max(0, len(comp) - comp.capacity + comp.section_len)
        i7 = tail_after <= 1 and outcome.removed_count >= K
        i10 = None
        if outcome.kind != NAIVE:
            lo = max(first_removed, tail_end)
            i10 = bool(mask[lo:T].all()) if T > lo else True
        pre_change = None
        if outcome.params_changed:
            pre_change = potential(comp, section_len=K, capacity=C).total
        evidence = ""
        if not (i7 and i8 and i10 is not False):
            evidence = (f"kind={outcome.kind} |B|={n} C={C} K={K} T={T} "
                        f"removed={outcome.removed_count} tail_after={tail_after}")
        self._add(EventRecord(self._next(), "compact", h, phi0, potential(comp).total,
                              K, C, comp.section_len, comp.capacity, comp.depth,
                              outcome.kind, T, outcome.removed_count, outcome.params_changed,
                              pre_change, i7, i8, i10, evidence))

    def before_merge(self, sketch, h, a, b):
        return max(potential(a).total, potential(b).total), a, b

    def after_merge(self, sketch, h, merged, token):
        phi0, a, b = token
        big = a if a.capacity >= b.capacity else b
        self._add(EventRecord(self._next(), "merge", h, phi0, potential(merged).total,
                              big.section_len, big.capacity, merged.section_len,
                              merged.capacity, merged.depth))


@dataclass
class PropertyResult:
    name: str
    checked: int = 0
    failed: int = 0
    worst: float = 0.0  # largest observed slack violation or max delta
    example: str = ""

    @property
    def ok(self) -> bool:
        return self.failed == 0


@dataclass
class PotentialPropertyReport:
    results: dict

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results.values())

    def __getitem__(self, name):
        return self.results[name]

    def merge(self, other: "PotentialPropertyReport") -> None:
        for name, r in other.results.items():
            mine = self.results[name]
            mine.checked += r.checked
            mine.failed += r.failed
            mine.worst = max(mine.worst, r.worst)
            if r.failed and not mine.example:
                mine.example = r.example

    def lines(self) -> list[str]:
        return [f"{r.name}: checked={r.checked} failed={r.failed} worst={r.worst:.6g}"
                + (f" e.g. {r.example}" if r.example else "") for r in self.results.values()]


def verify_potential_properties(records) -> PotentialPropertyReport:
    """Check P1-P5 on traced events (P2 only where a parameter change was traced)."""
    res = {name: PropertyResult(name) for name in ("P1", "P2", "P3", "P4", "P5")}

    def note(name, ok, value, rec):
        r = res[name]
        r.checked += 1
        r.worst = max(r.worst, value)
        if not ok:
            r.failed += 1
            if not r.example:
                r.example = f"event {rec.index} level {rec.level}: {rec.phi_before:.6g} -> {rec.phi_after:.6g}"

    for rec in records:
        delta = rec.phi_after - rec.phi_before
        if rec.kind == "insert":
            note("P1", _le(rec.phi_after, rec.phi_before), delta, rec)
        elif rec.kind == "compact":
            note("P4", _le(delta, P4_BOUND), delta, rec)
            if rec.params_changed:
                note("P3", _le(rec.phi_after, 0.0), rec.phi_after, rec)
                need = 2.0 ** (rec.c_before / (4 * rec.k_before))
                note("P2", rec.phi_pre_change >= need * (1 - REL_TOL),
                     need - rec.phi_pre_change, rec)
        elif rec.kind == "merge":
            note("P5", _le(rec.phi_after, rec.phi_before), delta, rec)
    return PotentialPropertyReport(res)
