"""Classical ray dynamics: tracing, horizontal-orbit stability, closed orbits.

Closed orbits are anchored at the QPC point on the wall, (0, 0); the horizontal
orbit bounces between there and the arc vertex, so one round trip has length
exactly 2 D.  Diffractive orbits replace one horizontal round trip by a tip
excursion (straight legs QPC -> tip -> QPC).  Transfer matrices act on
transverse (position, angle) deviations and are used both for the stability
classification and for conjugate-point (Maslov) counting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .geometry import (
    Point,
    ResonatorGeometry,
    ray_arc_intersect,
    reflect,
    tip_positions,
)

__all__ = [
    "Trajectory",
    "StabilityResult",
    "OrbitKind",
    "DiffractionEvent",
    "ClosedOrbit",
    "TipPath",
    "flight",
    "mirror_kick",
    "flat_wall",
    "trace",
    "horizontal_monodromy",
    "shoot_to_tip",
    "build_orbit_catalog",
    "maslov_count",
    "orbit_subpaths",
    "format_orbit_catalog",
]

log = logging.getLogger(__name__)

ANCHOR = np.zeros(2)  # the QPC point on the wall


# ---------------------------------------------------------------------------
# transfer matrices


def flight(s: float) -> np.ndarray:
    """Free flight over path length s."""
    return np.array([[1.0, s], [0.0, 1.0]])


def mirror_kick(radius: float, cos_chi: float = 1.0) -> np.ndarray:
    """Concave-mirror reflection at incidence angle chi (focal power 2/(R cos chi))."""
    return np.array([[1.0, 0.0], [-2.0 / (radius * cos_chi), 1.0]])


def flat_wall() -> np.ndarray:
    """Reflection off the flat wall leaves transverse deviations unchanged."""
    return np.eye(2)


@dataclass(frozen=True)
class StabilityResult:
    trace: float
    lyapunov_per_round_trip: float
    stable: bool


def horizontal_monodromy(geom: ResonatorGeometry) -> StabilityResult:
    """Round-trip monodromy of the horizontal orbit (wall -> vertex -> wall).

    The closed form of the trace is 2 - 4 D / R; |trace| > 2 means the orbit is
    unstable with Lyapunov exponent arccosh(|trace| / 2) per round trip.
    """
    m = flight(geom.separation) @ mirror_kick(geom.radius) @ flight(geom.separation) @ flat_wall()
    tr = float(np.trace(m))
    if abs(tr) > 2.0:
        lam = math.acosh(abs(tr) / 2.0)
    else:
        lam = 0.0
    return StabilityResult(trace=tr, lyapunov_per_round_trip=lam, stable=abs(tr) <= 2.0)


# ---------------------------------------------------------------------------
# ray tracing


@dataclass
class Trajectory:
    vertices: np.ndarray  # (n, 2), starting point first
    total_length: float
    bounce_count: int
    escaped: bool


def _next_hit(p: np.ndarray, d: np.ndarray, geom: ResonatorGeometry, min_t: float):
    """Nearest boundary hit (point, surface, t) along the ray, or None."""
    t_wall = math.inf
    if d[0] < 0.0:
        t = -p[0] / d[0]
        if t > min_t:
            t_wall = t
    arc = ray_arc_intersect(p, d, geom, min_t=min_t)
    t_arc = arc.path_length if arc is not None else math.inf
    if t_wall == math.inf and t_arc == math.inf:
        return None
    if t_wall < t_arc:
        hit = p + t_wall * d
        hit[0] = 0.0
        return hit, "wall", t_wall
    return np.array(arc.point, dtype=float), ("arc", arc.theta), t_arc


def trace(start, direction, geom: ResonatorGeometry, max_bounces: int = 1000) -> Trajectory:
    """Trace specular bounces off wall and arc until the ray escapes.

    A ray escapes when it can no longer intersect either surface (the wall is
    the full line x = 0, so escape happens moving away from it past the arc).
    If max_bounces is exhausted first the trajectory is flagged not-escaped,
    which is the expected outcome in the stable regime.
    """
    p = np.asarray(start, dtype=float).copy()
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    min_t = 1e-9 * geom.radius
    vertices = [p.copy()]
    total = 0.0
    escaped = False
    for _ in range(max_bounces):
        nxt = _next_hit(p, d, geom, min_t)
        if nxt is None:
            escaped = True
            break
        hit, surface, t = nxt
        total += t
        vertices.append(hit.copy())
        if surface == "wall":
            normal = np.array([1.0, 0.0])
        else:
            _, theta = surface
            normal = geom.arc_normal(theta)
        d = reflect(d, normal)
        p = hit
    return Trajectory(
        vertices=np.array(vertices),
        total_length=total,
        bounce_count=len(vertices) - 1,
        escaped=escaped,
    )


# ---------------------------------------------------------------------------
# tip paths (root-found launch angles landing on a reflector tip)


@dataclass(frozen=True)
class TipPath:
    points: np.ndarray  # (n_specular + 2, 2): anchor, bounces..., tip
    leg_lengths: tuple[float, ...]
    launch_angle: float
    n_specular: int

    @property
    def length(self) -> float:
        return float(sum(self.leg_lengths))


def _tip_miss(phi: float, geom: ResonatorGeometry, n: int, tip: np.ndarray):
    """Signed perpendicular miss of the tip from the ray after exactly n bounces."""
    d = np.array([math.cos(phi), math.sin(phi)])
    p = ANCHOR.copy()
    min_t = 1e-9 * geom.radius
    for _ in range(n):
        nxt = _next_hit(p, d, geom, min_t)
        if nxt is None:
            return None
        hit, surface, _ = nxt
        normal = np.array([1.0, 0.0]) if surface == "wall" else geom.arc_normal(surface[1])
        d = reflect(d, normal)
        p = hit
    rel = tip - p
    return float(d[0] * rel[1] - d[1] * rel[0]), p, d


def shoot_to_tip(
    geom: ResonatorGeometry,
    n_specular: int,
    which: str = "upper",
    scan_points: int = 1441,
) -> TipPath | None:
    """Path from the QPC anchor to a reflector tip after n_specular bounces.

    n_specular = 0 is the straight segment.  For n_specular >= 1 the launch
    angle is bracketed on a scan over (-pi/2, pi/2) and refined with brentq;
    returns None when no bracketing root exists or the tip leg is obstructed.
    """
    upper, lower = tip_positions(geom)
    tip = np.array(upper if which == "upper" else lower, dtype=float)
    if n_specular == 0:
        length = float(np.linalg.norm(tip - ANCHOR))
        return TipPath(
            points=np.array([ANCHOR, tip]),
            leg_lengths=(length,),
            launch_angle=math.atan2(tip[1], tip[0]),
            n_specular=0,
        )

    phis = np.linspace(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6, scan_points)
    prev = None
    failures = 0
    for phi in phis:
        res = _tip_miss(phi, geom, n_specular, tip)
        miss = res[0] if res is not None else None
        if prev is not None and miss is not None:
            phi0, m0 = prev
            if m0 == 0.0 or (m0 < 0) != (miss < 0):
                try:
                    root = brentq(
                        lambda x: _tip_miss(x, geom, n_specular, tip)[0],
                        phi0,
                        phi,
                        xtol=1e-13,
                    )
                except (ValueError, TypeError, RuntimeError):
                    failures += 1
                    prev = (phi, miss)
                    continue
                path = _assemble_tip_path(root, geom, n_specular, tip)
                if path is not None:
                    return path
                failures += 1
        prev = (phi, miss) if miss is not None else None
    log.debug(
        "shoot_to_tip: no valid root for n_specular=%d (failed brackets: %d)",
        n_specular,
        failures,
    )
    return None


def _assemble_tip_path(phi: float, geom, n: int, tip: np.ndarray) -> TipPath | None:
    res = _tip_miss(phi, geom, n, tip)
    if res is None:
        return None
    _, p_last, d_last = res
    rel = tip - p_last
    s = float(d_last @ rel)
    if s <= 1e-9 * geom.radius:
        return None
    # the leg to the tip must be the next boundary encounter
    nxt = _next_hit(p_last, d_last, geom, 1e-9 * geom.radius)
    if nxt is not None and nxt[2] < s - 1e-6 * geom.radius:
        return None
    # rebuild the vertex list
    d = np.array([math.cos(phi), math.sin(phi)])
    pts = [ANCHOR.copy()]
    p = ANCHOR.copy()
    for _ in range(n):
        hit, surface, _ = _next_hit(p, d, geom, 1e-9 * geom.radius)
        normal = np.array([1.0, 0.0]) if surface == "wall" else geom.arc_normal(surface[1])
        d = reflect(d, normal)
        p = hit
        pts.append(p.copy())
    pts.append(tip.copy())
    pts = np.array(pts)
    legs = tuple(float(np.linalg.norm(pts[i + 1] - pts[i])) for i in range(len(pts) - 1))
    return TipPath(points=pts, leg_lengths=legs, launch_angle=phi, n_specular=n)


# ---------------------------------------------------------------------------
# closed orbits


class OrbitKind(Enum):
    GEOMETRIC = "geometric"
    DIFFRACTIVE = "diffractive"


@dataclass(frozen=True)
class DiffractionEvent:
    tip: Point
    incoming_angle: float  # measured from the local edge tangent into the arc
    outgoing_angle: float


@dataclass(frozen=True)
class ClosedOrbit:
    kind: OrbitKind
    points: np.ndarray  # (m+1, 2) with points[0] == points[-1] == anchor
    vertex_kinds: tuple[str, ...]  # one per points[1:]; arc|wall|diffraction|rescatter
    length: float
    repetitions: int
    maslov_count: int
    diffraction_events: tuple[DiffractionEvent, ...]
    multiplicity: int
    orbit_id: str


@dataclass(frozen=True)
class Subpath:
    """A stretch of orbit between point re-emissions (launch, tip, re-scatter)."""

    length: float
    m12: float
    conjugate_points: int
    reflections: int


def _walk_subpaths(
    points: np.ndarray,
    vertex_kinds: tuple[str, ...],
    geom: ResonatorGeometry,
    samples_per_leg: int = 1000,
) -> list[Subpath]:
    """Accumulate transfer matrices leg by leg, splitting at re-emission vertices.

    Conjugate points are sign changes of the accumulated m12 sampled along each
    leg; an exact zero at a sample point is resolved by a half-step shift.
    """
    subpaths: list[Subpath] = []
    m = np.eye(2)
    length = 0.0
    conj = 0
    refl = 0
    prev_sign = 0  # m12 starts at the trivial zero of a point source
    for i, kind in enumerate(vertex_kinds):
        p0, p1 = points[i], points[i + 1]
        seg = p1 - p0
        seg_len = float(np.linalg.norm(seg))
        d = seg / seg_len
        s_samples = np.linspace(seg_len / samples_per_leg, seg_len, samples_per_leg)
        m12_vals = m[0, 1] + s_samples * m[1, 1]
        for v in m12_vals:
            sign = 1 if v > 0 else (-1 if v < 0 else 0)
            if sign == 0:
                log.debug("degenerate m12 sample resolved by midpoint perturbation")
                continue
            if prev_sign != 0 and sign != prev_sign:
                conj += 1
            prev_sign = sign
        m = flight(seg_len) @ m
        length += seg_len
        if kind == "arc":
            center = np.array(geom.arc_center, dtype=float)
            normal = (center - p1) / geom.radius
            cos_chi = abs(float(d @ normal))
            m = mirror_kick(geom.radius, cos_chi) @ m
            refl += 1
        elif kind == "wall":
            m = flat_wall() @ m
            refl += 1
        elif kind in ("diffraction", "rescatter"):
            if kind == "rescatter":
                refl += 1  # the QPC junction sits on the Dirichlet wall
            subpaths.append(
                Subpath(length=length, m12=float(m[0, 1]), conjugate_points=conj, reflections=refl)
            )
            m = np.eye(2)
            length = 0.0
            conj = 0
            refl = 0
            prev_sign = 0
        else:
            raise ValueError(f"unknown vertex kind {kind!r}")
    if length > 0.0:
        subpaths.append(
            Subpath(length=length, m12=float(m[0, 1]), conjugate_points=conj, reflections=refl)
        )
    return subpaths


def orbit_subpaths(orbit: ClosedOrbit, geom: ResonatorGeometry) -> list[Subpath]:
    """Sub-path summaries of an orbit, split at diffraction/re-scatter vertices."""
    return _walk_subpaths(orbit.points, orbit.vertex_kinds, geom)


def maslov_count(
    points: np.ndarray,
    vertex_kinds: tuple[str, ...],
    geom: ResonatorGeometry,
    samples_per_leg: int = 1000,
) -> int:
    """Pi-phase units along a closed path: +2 per Dirichlet reflection, +1 per
    conjugate point (sign change of the accumulated transfer-matrix m12)."""
    subs = _walk_subpaths(points, vertex_kinds, geom, samples_per_leg)
    return sum(2 * s.reflections + s.conjugate_points for s in subs)


def _edge_frame_angle(geom: ResonatorGeometry, leg_dir_to_tip: np.ndarray) -> float:
    """Angle between the tip->QPC direction and the screen tangent into the arc.

    The local knife edge at the upper tip continues the arc; its tangent
    pointing from the tip into the arc body is (sin(alpha/2), -cos(alpha/2)).
    """
    half = geom.half_angle
    tangent = np.array([math.sin(half), -math.cos(half)])
    u = -leg_dir_to_tip
    return float(math.acos(np.clip(u @ tangent, -1.0, 1.0)))


def build_orbit_catalog(geom: ResonatorGeometry, length_max: float) -> list[ClosedOrbit]:
    """All closed orbits up to length_max: horizontal repetitions and
    single-diffraction families.

    Group n geometric: n horizontal round trips, L = 2 n D, multiplicity 1.
    Group n diffractive: one tip excursion plus n - 1 round trips; it can be
    placed at any of n positions and either tip works, so multiplicity = 2 n.
    Sorted by length (diffractive first inside a group: the tip excursion is
    slightly shorter than a round trip whenever the tips are ahead of the wall).
    """
    if length_max <= 0:
        raise ValueError(f"length_max must be positive, got {length_max}")
    d_sep = geom.separation
    upper, _ = tip_positions(geom)
    tip = np.array(upper, dtype=float)
    l_tip = float(np.linalg.norm(tip - ANCHOR))
    vertex = np.array([d_sep, 0.0])

    orbits: list[ClosedOrbit] = []

    n = 1
    while 2 * n * d_sep <= length_max:
        pts = [ANCHOR]
        kinds: list[str] = []
        for _ in range(n):
            pts += [vertex, ANCHOR]
            kinds += ["arc", "wall"]
        pts_arr = np.array(pts)
        orbits.append(
            ClosedOrbit(
                kind=OrbitKind.GEOMETRIC,
                points=pts_arr,
                vertex_kinds=tuple(kinds),
                length=2 * n * d_sep,
                repetitions=n,
                maslov_count=maslov_count(pts_arr, tuple(kinds), geom),
                diffraction_events=(),
                multiplicity=1,
                orbit_id=f"geometric-{n}",
            )
        )
        n += 1

    n = 1
    while 2 * (n - 1) * d_sep + 2 * l_tip <= length_max:
        pts = [ANCHOR, tip, ANCHOR]
        kinds = ["diffraction", "rescatter" if n > 1 else "wall"]
        for _ in range(n - 1):
            pts += [vertex, ANCHOR]
            kinds += ["arc", "wall"]
        pts_arr = np.array(pts)
        leg_dir = (tip - ANCHOR) / l_tip
        gamma = _edge_frame_angle(geom, leg_dir)
        orbits.append(
            ClosedOrbit(
                kind=OrbitKind.DIFFRACTIVE,
                points=pts_arr,
                vertex_kinds=tuple(kinds),
                length=2 * (n - 1) * d_sep + 2 * l_tip,
                repetitions=n,
                maslov_count=maslov_count(pts_arr, tuple(kinds), geom),
                diffraction_events=(
                    DiffractionEvent(
                        tip=Point(float(tip[0]), float(tip[1])),
                        incoming_angle=gamma,
                        outgoing_angle=gamma,
                    ),
                ),
                multiplicity=2 * n,
                orbit_id=f"diffractive-{n}",
            )
        )
        n += 1

    orbits.sort(key=lambda o: (o.length, o.kind.value, o.repetitions))
    return orbits


def format_orbit_catalog(orbits: list[ClosedOrbit], radius: float) -> str:
    """Structured-text export: one record per orbit."""
    lines = [
        "# kind  L_cm  L_over_R  repetitions  multiplicity  maslov  diffraction_angles_deg"
    ]
    for o in orbits:
        angles = ";".join(
            f"{math.degrees(e.incoming_angle):.4f}/{math.degrees(e.outgoing_angle):.4f}"
            for e in o.diffraction_events
        )
        lines.append(
            f"{o.kind.value}  {o.length:.6f}  {o.length / radius:.6f}  "
            f"{o.repetitions}  {o.multiplicity}  {o.maslov_count}  {angles or '-'}"
        )
    return "\n".join(lines) + "\n"
