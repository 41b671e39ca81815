"""Face and degeneracy maps of the Čech nerve at levels 0, 1, 2.

Level ``n`` is the PD ring over K[eps]/eps^m in the variables
``X1..Xn`` (absolute and arithmetic flavors) and ``Y{s}_{j}`` for
``1 <= s <= d``, ``1 <= j <= n``.  Block ``j`` lists ``Xj`` first, then
``Y1_j .. Yd_j``, so the level-1 exponent of ``X1^[i] Y_1^[n]`` is ``(i, *n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional

from math import comb

import numpy as np
from gmpy2 import mpq
from scipy import sparse

from .pdalgebra import (
    PDElement,
    PDMatrix,
    PDRing,
    _fits,
    from_scaled,
    mul_scaled,
    normalize_scaled,
    pd_inv_one_plus,
    pd_ring,
    scaled_int64,
)
from .rings import TruncatedSeries, rational, rational_str


class FlavorKind(str, Enum):
    RELATIVE_SMOOTH = "relative_smooth"
    RELATIVE_LOG = "relative_log"
    ABSOLUTE_SMOOTH = "absolute_smooth"
    ABSOLUTE_LOG = "absolute_log"
    ARITHMETIC_POINT = "arithmetic_point"


RELATIVE_KINDS = {FlavorKind.RELATIVE_SMOOTH, FlavorKind.RELATIVE_LOG}
LOG_KINDS = {FlavorKind.RELATIVE_LOG, FlavorKind.ABSOLUTE_LOG}


def _series(x, m: int) -> TruncatedSeries:
    if isinstance(x, TruncatedSeries):
        if x.m != m:
            raise ValueError(f"parameter has truncation {x.m}, flavor has {m}")
        return x
    return TruncatedSeries.const(rational(x), m)


@dataclass(frozen=True)
class Flavor:
    """Which Čech nerve, plus the constants its structure maps need.

    ``a`` is the constant in ``E(u_1) = E(u_0)(1 + a X_1)`` for the absolute
    and arithmetic flavors.  ``beta`` generates the ideal in the relative
    flavors; the log variant forces ``beta = eps``.  ``pi`` is recorded for
    the log flavors so smooth and log data can be compared.
    """

    kind: FlavorKind
    d: int
    m: int
    a: Optional[TruncatedSeries] = None
    beta: Optional[TruncatedSeries] = None
    pi: Optional[Fraction] = None

    def __post_init__(self):
        kind = FlavorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.m < 1:
            raise ValueError("truncation level must be positive")
        if self.d < 0:
            raise ValueError("dimension must be non-negative")
        if kind == FlavorKind.ARITHMETIC_POINT and self.d != 0:
            raise ValueError("the arithmetic point has no geometric variables (d = 0)")
        if kind in RELATIVE_KINDS:
            if self.a is not None:
                raise ValueError("relative flavors take no constant a")
            beta = TruncatedSeries.eps(self.m) if self.beta is None else _series(self.beta, self.m)
            if kind == FlavorKind.RELATIVE_LOG and beta != TruncatedSeries.eps(self.m):
                raise ValueError("the relative log flavor uses beta = eps")
            object.__setattr__(self, "beta", beta)
        else:
            if self.a is None:
                raise ValueError(f"{kind.value} needs the constant a")
            a = _series(self.a, self.m)
            if not a.is_unit():
                raise ValueError("a must be a unit")
            if any(a.coeffs[1:]):
                raise ValueError("a must be a constant of K (no eps terms)")
            object.__setattr__(self, "a", a)
            if self.beta is not None:
                raise ValueError("absolute flavors use beta = eps implicitly")
        if self.pi is not None:
            object.__setattr__(self, "pi", rational(self.pi))

    @property
    def is_relative(self) -> bool:
        return self.kind in RELATIVE_KINDS

    @property
    def has_x(self) -> bool:
        return not self.is_relative

    @property
    def geometric_beta(self) -> TruncatedSeries:
        """The scalar that ``k_i`` multiplies in the graded action."""
        return self.beta if self.is_relative else TruncatedSeries.eps(self.m)

    def level_varnames(self, level: int) -> tuple:
        names = []
        for j in range(1, level + 1):
            if self.has_x:
                names.append(f"X{j}")
            names.extend(f"Y{s}_{j}" for s in range(1, self.d + 1))
        return tuple(names)

    def level_ring(self, level: int, bound: int) -> PDRing:
        if level not in (0, 1, 2):
            raise ValueError("only nerve levels 0, 1, 2 are materialized")
        return pd_ring(self.level_varnames(level), bound, self.m)

    def table_exponent(self, i: int, n) -> tuple:
        """Level-1 exponent of ``X1^[i] Y_1^[n]``."""
        n = tuple(n)
        if self.is_relative:
            if i:
                raise ValueError("relative tables have no arithmetic index")
            return n
        return (i,) + n

    def split_exponent(self, exp) -> tuple:
        exp = tuple(exp)
        if self.is_relative:
            return 0, exp
        return exp[0], exp[1:]

    def to_record(self) -> dict:
        rec = {"flavor": self.kind.value, "d": self.d, "m": self.m}
        if self.a is not None:
            rec["a"] = rational_str(self.a.coeffs[0])
        if self.beta is not None:
            rec["beta"] = self.beta.to_record()["coeffs"]
        if self.pi is not None:
            rec["pi"] = rational_str(self.pi)
        return rec


def log_partner(flavor: Flavor, pi) -> Flavor:
    """AbsoluteLog flavor whose X coordinates are pi times the smooth ones."""
    if flavor.kind != FlavorKind.ABSOLUTE_SMOOTH:
        raise ValueError("log_partner takes an absolute smooth flavor")
    pi = rational(pi)
    if pi == 0:
        raise ValueError("pi must be nonzero")
    return Flavor(FlavorKind.ABSOLUTE_LOG, flavor.d, flavor.m, a=flavor.a * pi, pi=pi)


class RingHom:
    """Ring map between truncated PD rings given by generator images.

    Divided powers go to divided powers of images, which is legitimate
    because every image lies in the augmentation ideal.  Slot images are
    memoized, so applying the same map to many elements is cheap.
    """

    def __init__(self, source: PDRing, target: PDRing, images: Dict[str, PDElement], eps_image: PDElement, name: str = ""):
        if source.m != target.m:
            raise ValueError("ring maps must preserve the truncation level")
        missing = set(source.varnames) - set(images)
        if missing:
            raise ValueError(f"missing images for {sorted(missing)}")
        for v, img in images.items():
            if img.ring != target:
                raise ValueError(f"image of {v} lives in the wrong ring")
            if not img.constant_term().is_zero():
                raise ValueError(f"image of {v} is not in the augmentation ideal")
        self.source = source
        self.target = target
        self.images = dict(images)
        self.eps_image = eps_image
        self.name = name
        self._mono_memo: Dict[int, PDElement] = {}
        self._sparse = None
        self._scaled = {}
        self._scaled_gens = None

    def _substitution_map(self):
        """Per-variable target index when every image is a bare variable or zero."""
        if self.eps_image != self.target.eps():
            return None
        where = {}
        for v, img in self.images.items():
            nz = np.flatnonzero(img.data != 0)
            if not len(nz):
                where[v] = None
                continue
            if len(nz) != 1 or img.data[nz[0]] != 1:
                return None
            mono, e = divmod(int(nz[0]), self.target.m)
            exp = self.target.monomials[mono]
            if e or sum(exp) != 1:
                return None
            where[v] = exp.index(1)
        return where

    def _scaled_image(self, mono: int, e: int):
        """Image of a slot as scaled int64 (ints, D), or None if it would overflow."""
        key = (mono, e)
        if key in self._scaled:
            return self._scaled[key]
        tgt = self.target
        if self._scaled_gens is None:
            self._scaled_gens = {v: scaled_int64(img.data) for v, img in self.images.items()}
            self._scaled_gens["eps"] = scaled_int64(self.eps_image.data)
        exp = self.source.monomials[mono]
        if e:
            prev = self._scaled_image(mono, e - 1)
            gen = self._scaled_gens["eps"]
            out = None if prev is None or gen is None else mul_scaled(tgt, prev, gen)
        elif not any(exp):
            ints = np.zeros(tgt.nslots, dtype=np.int64)
            ints[0] = 1
            out = (ints, 1)
        else:
            v = max(k for k, x in enumerate(exp) if x)
            parent = list(exp)
            parent[v] -= 1
            prev = self._scaled_image(self.source.index[tuple(parent)], 0)
            gen = self._scaled_gens[self.source.varnames[v]]
            out = None if prev is None or gen is None else mul_scaled(tgt, prev, gen)
            if out is not None and exp[v] > 1:
                out = normalize_scaled(out[0], out[1] * exp[v])
        self._scaled[key] = out
        return out

    def _mono_image(self, mono: int) -> PDElement:
        hit = self._mono_memo.get(mono)
        if hit is not None:
            return hit
        exp = self.source.monomials[mono]
        if not any(exp):
            img = self.target.one()
        else:
            v = max(k for k, x in enumerate(exp) if x)
            parent = list(exp)
            parent[v] -= 1
            k = exp[v]
            img = self._mono_image(self.source.index[tuple(parent)]) * self.images[self.source.varnames[v]]
            if k > 1:
                img = img.scale(Fraction(1, k))
        self._mono_memo[mono] = img
        return img

    def _slot_sparse(self, s: int):
        """Sparse image of one source slot as (target indices, mpq values)."""
        if self._sparse is None:
            self._sparse = {}
            self._sub = self._substitution_map()
        hit = self._sparse.get(s)
        if hit is not None:
            return hit
        src, tgt = self.source, self.target
        mono, e = divmod(s, src.m)
        if self._sub is not None:
            texp = [0] * len(tgt.varnames)
            coeff = 1
            dead = False
            for v, k in zip(src.varnames, src.monomials[mono]):
                if not k:
                    continue
                t = self._sub[v]
                if t is None:
                    dead = True
                    break
                # x^[a] y^[b] with x, y -> z gives C(a+b, a) z^[a+b]
                coeff *= comb(texp[t] + k, k)
                texp[t] += k
            if dead or sum(texp) > tgt.bound:
                hit = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=object))
            else:
                slot = tgt.index[tuple(texp)] * tgt.m + e
                hit = (np.array([slot], dtype=np.int64), np.array([mpq(coeff)], dtype=object))
        else:
            scaled = self._scaled_image(mono, e)
            if scaled is not None:
                ints, D = scaled
                idx = np.flatnonzero(ints)
                hit = (idx, from_scaled(ints[idx], D))
            else:
                img = self._mono_image(mono)
                if e:
                    img = PDElement(tgt, self.slot_image(s - 1).data) * self.eps_image
                idx = np.flatnonzero(img.data != 0)
                hit = (idx, img.data[idx])
        self._sparse[s] = hit
        return hit

    def slot_image(self, s: int) -> PDElement:
        idx, vals = self._slot_sparse(s)
        data = self.target.zero().data
        data[idx] = vals
        return PDElement(self.target, data)

    def _apply_blocks(self, data: np.ndarray) -> np.ndarray:
        """Image of a (nslots, *shape) coefficient array."""
        tail = data.shape[1:]
        flat = data.reshape(data.shape[0], -1)
        nz = np.flatnonzero((flat != 0).any(axis=1))
        out = np.empty((self.target.nslots, flat.shape[1]), dtype=object)
        out.fill(mpq(0))
        if not len(nz):
            return out.reshape((self.target.nslots,) + tail)
        rows, cols, vals = [], [], []
        for pos, s in enumerate(nz):
            idx, v = self._slot_sparse(int(s))
            rows.append(idx)
            cols.append(np.full(len(idx), pos, dtype=np.int64))
            vals.append(v)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals) if vals else np.zeros(0, dtype=object)
        if not len(vals):
            return out.reshape((self.target.nslots,) + tail)
        fast = self._apply_int(rows, cols, vals, flat[nz])
        if fast is not None:
            out = fast
        else:
            for r_, c_, v_ in zip(rows, cols, vals):
                out[r_] = out[r_] + flat[nz[c_]] * v_
        return out.reshape((self.target.nslots,) + tail)

    def _apply_int(self, rows, cols, vals, coeffs):
        si = scaled_int64(vals)
        sc = scaled_int64(coeffs)
        if si is None or sc is None:
            return None
        (vi, Dv), (ci, Dc) = si, sc
        per_row = np.bincount(rows, minlength=self.target.nslots).max()
        if not _fits(int(np.abs(vi).max()) or 1, int(np.abs(ci).max()) or 1, per_row):
            return None
        mat = sparse.csr_matrix((vi, (rows, cols)), shape=(self.target.nslots, coeffs.shape[0]), dtype=np.int64)
        prod = np.asarray(mat @ ci)
        return from_scaled(prod, Dv * Dc)

    def apply(self, x: PDElement) -> PDElement:
        if x.ring != self.source:
            raise ValueError("element is not in the source ring")
        return PDElement(self.target, self._apply_blocks(x.data.reshape(-1, 1))[:, 0])

    __call__ = apply

    def apply_matrix(self, mat: PDMatrix) -> PDMatrix:
        if mat.ring != self.source:
            raise ValueError("matrix is not over the source ring")
        return PDMatrix(self.target, self._apply_blocks(mat.data))

    def then(self, other: "RingHom") -> "RingHom":
        """``other`` after ``self``."""
        if other.source != self.target:
            raise ValueError("maps do not compose")
        images = {v: other.apply(img) for v, img in self.images.items()}
        return RingHom(self.source, other.target, images, other.apply(self.eps_image), f"{other.name}∘{self.name}")

    def generator_images(self) -> Dict[str, PDElement]:
        out = dict(self.images)
        out["eps"] = self.eps_image
        return out

    def __repr__(self):
        return f"RingHom({self.name}: {self.source.varnames} -> {self.target.varnames})"


Perturbation = Callable[[str, PDElement], PDElement]


def _var(ring: PDRing, kind: str, s: int, j: int) -> PDElement:
    return ring.var(f"X{j}" if kind == "X" else f"Y{s}_{j}")


def face_generators(flavor: Flavor, i: int, from_level: int, bound: int) -> Dict[str, PDElement]:
    """Generator images of the face map p_i from ``from_level`` to ``from_level + 1``.

    The returned dict also carries the image of eps under key ``"eps"``.
    """
    n = from_level
    if n not in (0, 1):
        raise ValueError("faces are materialized from levels 0 and 1 only")
    if not 0 <= i <= n + 1:
        raise IndexError(f"face index {i} out of range for level {n}")
    tgt = flavor.level_ring(n + 1, bound)
    out: Dict[str, PDElement] = {}
    if i == 0 and flavor.has_x:
        x1 = tgt.var("X1")
        unit_x = tgt.one() + x1 * tgt.const(flavor.a)
        inv_x = pd_inv_one_plus(x1 * tgt.const(flavor.a))
        out["eps"] = tgt.eps() * unit_x
    else:
        inv_x = None
        out["eps"] = tgt.eps()
    inv_y = {}
    if i == 0:
        scale = flavor.beta if flavor.is_relative else TruncatedSeries.eps(flavor.m)
        for s in range(1, flavor.d + 1):
            y1 = tgt.var(f"Y{s}_1")
            inv_y[s] = pd_inv_one_plus(-(y1 * tgt.const(scale)))
    for j in range(1, n + 1):
        if flavor.has_x:
            name = f"X{j}"
            if i == 0:
                out[name] = (tgt.var(f"X{j + 1}") - tgt.var("X1")) * inv_x
            else:
                out[name] = tgt.var(f"X{j}" if j < i else f"X{j + 1}")
        for s in range(1, flavor.d + 1):
            name = f"Y{s}_{j}"
            if i == 0:
                img = (tgt.var(f"Y{s}_{j + 1}") - tgt.var(f"Y{s}_1")) * inv_y[s]
                if inv_x is not None:
                    img = img * inv_x
                out[name] = img
            else:
                out[name] = tgt.var(f"Y{s}_{j}" if j < i else f"Y{s}_{j + 1}")
    return out


def degeneracy_generators(flavor: Flavor, i: int, from_level: int, bound: int) -> Dict[str, PDElement]:
    """Generator images of sigma_i from ``from_level`` down to ``from_level - 1``."""
    n = from_level
    if n not in (1, 2):
        raise ValueError("degeneracies are materialized from levels 1 and 2 only")
    if not 0 <= i <= n - 1:
        raise IndexError(f"degeneracy index {i} out of range for level {n}")
    tgt = flavor.level_ring(n - 1, bound)
    out: Dict[str, PDElement] = {"eps": tgt.eps()}
    for j in range(1, n + 1):
        names = ([("X", 0)] if flavor.has_x else []) + [("Y", s) for s in range(1, flavor.d + 1)]
        for kind, s in names:
            name = f"X{j}" if kind == "X" else f"Y{s}_{j}"
            if i == 0 and j == 1:
                out[name] = tgt.zero()
            elif j <= i:
                out[name] = _var(tgt, kind, s, j)
            else:
                out[name] = _var(tgt, kind, s, j - 1)
    return out


def _hom(flavor: Flavor, src_level: int, tgt_level: int, bound: int, gens: Dict[str, PDElement], name: str, perturb: Optional[Perturbation]) -> RingHom:
    gens = dict(gens)
    if perturb is not None:
        gens = {k: perturb(k, v) for k, v in gens.items()}
    eps_img = gens.pop("eps")
    return RingHom(flavor.level_ring(src_level, bound), flavor.level_ring(tgt_level, bound), gens, eps_img, name)


_HOM_CACHE: Dict[tuple, RingHom] = {}


def face(flavor: Flavor, i: int, from_level: int, bound: int, perturb: Optional[Perturbation] = None) -> RingHom:
    """p_i : level ``from_level`` -> ``from_level + 1``."""
    key = ("face", flavor, i, from_level, bound)
    if perturb is None and key in _HOM_CACHE:
        return _HOM_CACHE[key]
    hom = _hom(flavor, from_level, from_level + 1, bound, face_generators(flavor, i, from_level, bound), f"p{i}", perturb)
    if perturb is None:
        _HOM_CACHE[key] = hom
    return hom


def degeneracy(flavor: Flavor, i: int, from_level: int, bound: int, perturb: Optional[Perturbation] = None) -> RingHom:
    """sigma_i : level ``from_level`` -> ``from_level - 1``."""
    key = ("degeneracy", flavor, i, from_level, bound)
    if perturb is None and key in _HOM_CACHE:
        return _HOM_CACHE[key]
    hom = _hom(flavor, from_level, from_level - 1, bound, degeneracy_generators(flavor, i, from_level, bound), f"s{i}", perturb)
    if perturb is None:
        _HOM_CACHE[key] = hom
    return hom


def mutated_face(flavor: Flavor, from_level: int, bound: int) -> RingHom:
    """p0 with the (1 + a X1)^{-1} factor removed from every variable image."""
    if not flavor.has_x:
        raise ValueError("the mutation needs an X variable")
    tgt = flavor.level_ring(from_level + 1, bound)
    unit = tgt.one() + tgt.var("X1") * tgt.const(flavor.a)

    def perturb(name: str, img: PDElement) -> PDElement:
        return img if name == "eps" else img * unit

    return face(flavor, 0, from_level, bound, perturb=perturb)


@dataclass
class IdentityCheck:
    name: str
    passed: bool
    witness: Optional[dict] = None


@dataclass
class SimplicialReport:
    flavor: Flavor
    bound: int
    checks: List[IdentityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        bad = [c.name for c in self.checks if not c.passed]
        status = "PASS" if not bad else "FAIL (" + ", ".join(bad) + ")"
        return f"simplicial identities [{self.flavor.kind.value}, N={self.bound}]: {status}"


def _compare(name: str, f: RingHom, g: RingHom) -> IdentityCheck:
    fi, gi = f.generator_images(), g.generator_images()
    for gen in sorted(fi):
        exp = fi[gen].first_difference(gi[gen])
        if exp is not None:
            return IdentityCheck(name, False, {"generator": gen, "monomial": dict(zip(f.target.varnames, exp))})
    return IdentityCheck(name, True)


def _identity(flavor: Flavor, level: int, bound: int) -> RingHom:
    ring = flavor.level_ring(level, bound)
    return RingHom(ring, ring, {v: ring.var(v) for v in ring.varnames}, ring.eps(), "id")


def check_simplicial_identities(flavor: Flavor, bound: int, faces: Optional[Dict[tuple, RingHom]] = None) -> SimplicialReport:
    """Cosimplicial identities among the maps of levels <= 2, compared on generators.

    ``faces`` may override individual maps, keyed ``("p", i, level)`` or
    ``("s", i, level)``; this is how the mutation tests inject a broken map.
    """
    faces = dict(faces or {})

    def p(i, lvl):
        return faces.get(("p", i, lvl)) or face(flavor, i, lvl, bound)

    def s(i, lvl):
        return faces.get(("s", i, lvl)) or degeneracy(flavor, i, lvl, bound)

    rep = SimplicialReport(flavor, bound)
    id0, id1 = _identity(flavor, 0, bound), _identity(flavor, 1, bound)
    # sigma after face, levels 0 -> 1 -> 0
    rep.checks.append(_compare("s0.p0 = id (level 0)", p(0, 0).then(s(0, 1)), id0))
    rep.checks.append(_compare("s0.p1 = id (level 0)", p(1, 0).then(s(0, 1)), id0))
    # levels 1 -> 2 -> 1
    rep.checks.append(_compare("s0.p0 = id (level 1)", p(0, 1).then(s(0, 2)), id1))
    rep.checks.append(_compare("s0.p1 = id (level 1)", p(1, 1).then(s(0, 2)), id1))
    rep.checks.append(_compare("s1.p1 = id (level 1)", p(1, 1).then(s(1, 2)), id1))
    rep.checks.append(_compare("s1.p2 = id (level 1)", p(2, 1).then(s(1, 2)), id1))
    rep.checks.append(_compare("s0.p2 = p1.s0", p(2, 1).then(s(0, 2)), s(0, 1).then(p(1, 0))))
    rep.checks.append(_compare("s1.p0 = p0.s0", p(0, 1).then(s(1, 2)), s(0, 1).then(p(0, 0))))
    # faces 0 -> 2: p_j p_i = p_i p_{j-1} for i < j
    for i, j in ((0, 1), (0, 2), (1, 2)):
        rep.checks.append(_compare(f"p{j}.p{i} = p{i}.p{j - 1}", p(i, 0).then(p(j, 1)), p(j - 1, 0).then(p(i, 1))))
    # degeneracies 2 -> 0
    rep.checks.append(_compare("s0.s0 = s0.s1", s(0, 2).then(s(0, 1)), s(1, 2).then(s(0, 1))))
    return rep
