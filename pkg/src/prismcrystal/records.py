"""JSON file formats for specs, tables, group elements and reports.

Rationals are strings (``"3/2"``), matrices are lists of row-major grids, one
grid per eps-degree.  Output is sorted and indented so identical inputs give
identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .cohomology import DegreeWindow
from .connections import CrystalSpec, SpecError
from .cosimplicial import Flavor, FlavorKind
from .realization import GroupElementData
from .rings import SeriesMatrix, TruncatedSeries, rational, rational_str
from .stratification import StratificationTable

DEFAULT_PD_DEGREE = 6
DEFAULT_PRIME = 2
DEFAULT_NMAX = 40
DEFAULT_CUTOFF = 10


class InputError(ValueError):
    """Malformed input; the message names the offending field or position."""


def _field(rec: dict, key: str, where: str):
    if key not in rec:
        raise InputError(f"{where}: missing field '{key}'")
    return rec[key]


def _rat(x, where: str):
    try:
        return rational(x)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise InputError(f"{where}: not a rational ({x!r})") from exc


def _int(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise InputError(f"{where}: expected an integer, got {x!r}")
    return x


def _series(x, m: int, where: str) -> TruncatedSeries:
    if isinstance(x, list):
        if len(x) > m:
            raise InputError(f"{where}: {len(x)} coefficients exceed truncation {m}")
        return TruncatedSeries(m, [_rat(c, f"{where}[{k}]") for k, c in enumerate(x)])
    return TruncatedSeries.const(_rat(x, where), m)


def matrix_from_record(grids, r: int, m: int, where: str) -> SeriesMatrix:
    if not isinstance(grids, list) or not grids:
        raise InputError(f"{where}: expected a non-empty list of grids")
    if len(grids) > m:
        raise InputError(f"{where}: {len(grids)} eps-degrees exceed truncation {m}")
    for e, g in enumerate(grids):
        if not isinstance(g, list) or len(g) != r or any(not isinstance(row, list) or len(row) != r for row in g):
            raise InputError(f"{where}[{e}]: expected a {r}x{r} grid")
        for i, row in enumerate(g):
            for j, x in enumerate(row):
                _rat(x, f"{where}[{e}][{i}][{j}]")
    return SeriesMatrix.from_record(grids, m)


def flavor_from_record(rec: dict, where: str = "flavor") -> Flavor:
    kind = _field(rec, "flavor", where)
    try:
        kind = FlavorKind(kind)
    except ValueError as exc:
        names = ", ".join(k.value for k in FlavorKind)
        raise InputError(f"{where}.flavor: unknown flavor {kind!r} (one of {names})") from exc
    d = _int(_field(rec, "d", where), f"{where}.d")
    m = _int(_field(rec, "m", where), f"{where}.m")
    kw: Dict[str, Any] = {}
    if "a" in rec:
        kw["a"] = _rat(rec["a"], f"{where}.a")
    if "beta" in rec:
        kw["beta"] = _series(rec["beta"], m, f"{where}.beta")
    if "pi" in rec:
        kw["pi"] = _rat(rec["pi"], f"{where}.pi")
    try:
        return Flavor(kind, d, m, **kw)
    except ValueError as exc:
        raise InputError(f"{where}: {exc}") from exc


@dataclass
class SpecFile:
    spec: CrystalSpec
    pd_degree: int = DEFAULT_PD_DEGREE
    window: Optional[DegreeWindow] = None
    prime: int = DEFAULT_PRIME
    n_max: int = DEFAULT_NMAX
    cutoff: int = DEFAULT_CUTOFF
    seed: int = 0

    def to_record(self) -> dict:
        spec = self.spec
        rec = dict(spec.flavor.to_record())
        rec["r"] = spec.r
        rec["N"] = [n.to_record() for n in spec.N]
        if spec.phi is not None:
            rec["phi"] = spec.phi.to_record()
        rec["pd_degree"] = self.pd_degree
        if self.window is not None:
            rec["window"] = [list(iv) for iv in self.window.intervals]
        rec["prime"] = self.prime
        rec["n_max"] = self.n_max
        rec["cutoff"] = self.cutoff
        rec["seed"] = self.seed
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SpecFile":
        if not isinstance(rec, dict):
            raise InputError("spec: expected an object")
        flavor = flavor_from_record(rec, "spec")
        r = _int(_field(rec, "r", "spec"), "spec.r")
        if r < 1:
            raise InputError("spec.r: rank must be positive")
        Ns = rec.get("N", [])
        if not isinstance(Ns, list) or len(Ns) != flavor.d:
            raise InputError(f"spec.N: expected {flavor.d} matrices")
        mats = [matrix_from_record(g, r, flavor.m, f"spec.N[{k}]") for k, g in enumerate(Ns)]
        phi = None
        if rec.get("phi") is not None:
            phi = matrix_from_record(rec["phi"], r, flavor.m, "spec.phi")
        try:
            spec = CrystalSpec(flavor, r, tuple(mats), phi)
        except SpecError as exc:
            raise InputError(f"spec: {exc}") from exc
        window = None
        if "window" in rec:
            try:
                window = DegreeWindow(tuple(tuple(iv) for iv in rec["window"]))
            except (TypeError, ValueError) as exc:
                raise InputError(f"spec.window: {exc}") from exc
            if len(window.intervals) != flavor.d:
                raise InputError(f"spec.window: expected {flavor.d} intervals")
        return cls(
            spec,
            _int(rec.get("pd_degree", DEFAULT_PD_DEGREE), "spec.pd_degree"),
            window,
            _int(rec.get("prime", DEFAULT_PRIME), "spec.prime"),
            _int(rec.get("n_max", DEFAULT_NMAX), "spec.n_max"),
            _int(rec.get("cutoff", DEFAULT_CUTOFF), "spec.cutoff"),
            _int(rec.get("seed", 0), "spec.seed"),
        )


def table_from_record(rec: dict) -> StratificationTable:
    flavor = flavor_from_record(_field(rec, "flavor", "table"), "table.flavor")
    r = _int(_field(rec, "r", "table"), "table.r")
    bound = _int(_field(rec, "pd_degree", "table"), "table.pd_degree")
    coeffs = {}
    for k, c in enumerate(_field(rec, "coefficients", "table")):
        where = f"table.coefficients[{k}]"
        i = _int(_field(c, "i", where), f"{where}.i")
        n = tuple(_int(x, f"{where}.n") for x in _field(c, "n", where))
        coeffs[(i, n)] = matrix_from_record(_field(c, "matrix", where), r, flavor.m, f"{where}.matrix")
    try:
        return StratificationTable(flavor, r, bound, coeffs)
    except ValueError as exc:
        raise InputError(f"table: {exc}") from exc


def group_element_from_record(rec: dict, d: int, m: int) -> GroupElementData:
    nvec = [_int(x, "group.nvec") for x in rec.get("nvec", [0] * d)]
    if len(nvec) != d:
        raise InputError(f"group.nvec: expected {d} entries")
    g = _series(rec.get("gE_over_E", "1"), m, "group.gE_over_E")
    t = _series(rec.get("t_over_E", "1"), m, "group.t_over_E")
    try:
        return GroupElementData(tuple(nvec), g, t)
    except ValueError as exc:
        raise InputError(f"group: {exc}") from exc


def loads(text: str, what: str = "input") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_json(path: str, what: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read(), f"{what} {path}")
    except OSError as exc:
        raise InputError(f"{what} {path}: {exc.strerror}") from exc


# reports

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class Report:
    command: str
    records: List[dict] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)
    payload: Dict[str, Any] = field(default_factory=dict)

    def add(self, check: str, status: str, witness: Any = None, seconds: float = 0.0):
        if any(r["check"] == check for r in self.records):
            raise ValueError(f"check {check} recorded twice")
        self.records.append({"check": check, "status": status, "witness": witness})
        self.timing[check] = round(seconds, 6)

    def exit_code(self) -> int:
        statuses = {r["status"] for r in self.records}
        if FAIL in statuses:
            return 1
        if INCONCLUSIVE in statuses:
            return 2
        return 0

    def machine(self) -> str:
        """Deterministic JSON; only the ``timing`` block varies between runs."""
        return dumps(
            {
                "command": self.command,
                "checks": self.records,
                "result": self.payload,
                "exit_code": self.exit_code(),
                "timing": self.timing,
            }
        )

    def text(self) -> str:
        lines = [f"{self.command}:"]
        for r in self.records:
            t = self.timing.get(r["check"], 0.0)
            lines.append(f"  {r['check']:<24} {r['status'].upper():<13} ({t:.3f}s)")
            if r["status"] != PASS and r["witness"]:
                lines.append(f"    witness: {json.dumps(r['witness'], sort_keys=True)}")
        for key in sorted(self.payload):
            lines.extend(_text_lines(key, self.payload[key], 1))
        return "\n".join(lines) + "\n"


def _compact(val) -> str:
    return json.dumps(val, sort_keys=True, separators=(",", ":"))


def _text_lines(key: str, val, depth: int) -> List[str]:
    pad = "  " * depth
    if isinstance(val, dict) and val:
        out = [f"{pad}{key}:"]
        for k in sorted(val):
            out.extend(_text_lines(k, val[k], depth + 1))
        return out
    if isinstance(val, list) and val and all(isinstance(v, dict) for v in val):
        return [f"{pad}{key}:"] + [f"{pad}  - {_compact(v)}" for v in val]
    if isinstance(val, (dict, list)):
        return [f"{pad}{key}: {_compact(val)}"]
    return [f"{pad}{key}: {val}"]
