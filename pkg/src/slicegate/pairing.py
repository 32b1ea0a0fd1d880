"""Symmetric bilinear pairing over supersingular curves y^2 = x^3 + x.

Each named profile fixes a prime field F_p with p = r*h - 1, p = 3 (mod 4),
giving a supersingular curve of order p + 1 with embedding degree 2.  The
prime-order subgroup G of size r, together with the distortion map
(x, y) -> (-x, i*y) into E(F_p^2), yields a symmetric pairing
e : G x G -> mu_r, computed as a Tate pairing (Miller loop over the bits
of r, then final exponentiation by (p^2 - 1)/r).  Because the cyclotomic
exponent kills every F_p* factor, vertical-line denominators are dropped.

Profiles (regenerate with scripts/generate_group_params.py):

==========  ========  ========  ==================================
profile     |p| bits  |r| bits  intended use
==========  ========  ========  ==================================
``ss1536``  1536      256       default; >= 100-bit security
``ss512``   512       160       legacy prototype scale (~80-bit)
``ss192``   192       96        tests only; no security
==========  ========  ========  ==================================

Points in G are affine ``(x, y)`` tuples (``None`` is the identity);
elements of the target group are ``(a, b)`` tuples meaning a + b*i with
a^2 + b^2 = 1.  All scalars live in Z_r.
"""

from __future__ import annotations

import hashlib
import random
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import GroupError

Point = Optional[tuple[int, int]]
GtElement = tuple[int, int]

_SYSTEM_RNG = random.SystemRandom()


@dataclass(frozen=True)
class GroupProfile:
    name: str
    p: int
    r: int
    h: int
    gx: int
    gy: int


PROFILE_TABLE = {
    "ss1536": GroupProfile(
        name="ss1536",
        p=1534886766843587021748894644672614048833995076506332437012069813675578076812238690259505111939136483250781718134987117477657419702203597117194450885212185058285736119234143632342103565259875903999738538193317903932207877632856705234082272684883877230888143667679130976351059356597980212930847337941655518001841874585598348043477472787360604607107382138109815463659882348041972543912266858129282291937292839676305238900072671207616174951451220753668548399553644067,
        r=112507750363281163636181546701034630796793059109687518597029508876813170578957,
        h=13642498066911163445158665510232569063606395734751345426564951232541988634146021219747909123971536185707380182853850698126661981195099105333606747713806869467383824879280813646399570267085957738823671040020812924351360233047499980553984199551057966155545397908827283522376611151951507577545176835256930285979123453299825732724103159939089084609692179672151063249158280628067803865766324,
        gx=161811143194605779767892474660843346326013773260785575167168702936310015960541404469042779750717309643462781036320465545230482802808157592109932292619046303072248580438356344821778180424658771282055479038845190217363176043868897364482362659967419163342309706091259994929454469393118050146093308548640779654048946660175663399149458895520556854769223333911256286644493829825000824486973544598314021786816311743673467533878984696281415342732793873408233924238059494,
        gy=364160945403149407818556666644433567308472150664796022234977855542917794966774447017104708590379283101922883784211300964057343967892741970063106353200092513120194641064427587130556741545589814264977647769219037221057715409697954509613109788904799085233800120545791661725466988519228228711000251556735918670423888409908982132188806395918315552574696429929595946043341133145860694842802395210228037352552978558816099580542033720314168764910836911871506836519978346,
    ),
    "ss512": GroupProfile(
        name="ss512",
        p=10324500985307585330906533672403122206730881546017227453049232642615900709434998617103489993231786183558495788847493021378685806010357230620431084091795107,
        r=1229159396346514421164639348831780600120470309167,
        h=8399643704466290110566091438640389058666724585541082798184295404092499636441773178953257957773402322375324,
        gx=1995597591675924839030355324947164647109620124511121186515461584032545732089145737221668752446776251587828692495357901413695810018437887670842872555751972,
        gy=2561600390564083638976670384204021360091523971172629832180401893434032331511715591488376039736493594133481570950762686122587493997019379590861483772023561,
    ),
    "ss192": GroupProfile(
        name="ss192",
        p=5390367389114245257401536897265122456671604317860080966079,
        r=74073418420525585164478779559,
        h=72770603869155119621354541120,
        gx=4400525890362264191537486904442265645113803960568416715101,
        gy=3707142685642214765691860254738280846705501385593953118138,
    ),
}

DEFAULT_PROFILE = "ss1536"

_H2P_TAG = b"slicegate:h2p:v1:"


class PairingGroup:
    """Arithmetic facade for one profile; instances are thread-safe."""

    def __init__(self, profile: str | GroupProfile = DEFAULT_PROFILE):
        if isinstance(profile, str):
            try:
                profile = PROFILE_TABLE[profile]
            except KeyError:
                raise GroupError(f"unknown pairing profile {profile!r}") from None
        self.profile = profile
        self.name = profile.name
        self.p = profile.p
        self.r = profile.r
        self.h = profile.h
        self.g: Point = (profile.gx, profile.gy)
        self.element_size = (self.p.bit_length() + 7) // 8
        self._sqrt_exp = (self.p + 1) // 4
        self._hash_cache: dict[bytes, Point] = {}
        self._cache_lock = threading.Lock()
        self._gt_generator: Optional[GtElement] = None

    # -- scalars ---------------------------------------------------------

    def random_scalar(self, rng: Optional[random.Random] = None) -> int:
        return (rng or _SYSTEM_RNG).randrange(1, self.r)

    # -- curve arithmetic --------------------------------------------------

    def is_on_curve(self, point: Point) -> bool:
        if point is None:
            return True
        x, y = point
        p = self.p
        return 0 <= x < p and 0 <= y < p and (y * y - (x * x * x + x)) % p == 0

    def neg(self, point: Point) -> Point:
        if point is None:
            return None
        return (point[0], (-point[1]) % self.p)

    def add(self, a: Point, b: Point) -> Point:
        p = self.p
        if a is None:
            return b
        if b is None:
            return a
        x1, y1 = a
        x2, y2 = b
        if x1 == x2:
            if (y1 + y2) % p == 0:
                return None
            lam = (3 * x1 * x1 + 1) * pow(2 * y1, -1, p) % p
        else:
            lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
        x3 = (lam * lam - x1 - x2) % p
        return (x3, (lam * (x1 - x3) - y1) % p)

    def mul(self, k: int, point: Point) -> Point:
        """Scalar multiple k*point; internally Jacobian to avoid inversions."""
        if point is None:
            return None
        if k < 0:
            return self.neg(self.mul(-k, point))
        if k == 0:
            return None
        return self._jac_to_affine(self._jac_mul(k, point))

    def is_in_subgroup(self, point: Point) -> bool:
        if point is None:
            return True
        return self._jac_mul(self.r, point)[2] == 0

    def _jac_mul(self, k: int, point: tuple[int, int]) -> tuple[int, int, int]:
        p = self.p
        x, y = point
        rx, ry, rz = 1, 1, 0
        for bit in bin(k)[2:]:
            rx, ry, rz = _jac_double(rx, ry, rz, p)
            if bit == "1":
                rx, ry, rz = _jac_add_affine(rx, ry, rz, x, y, p)
        return rx, ry, rz

    def _jac_to_affine(self, jac: tuple[int, int, int]) -> Point:
        x, y, z = jac
        if z == 0:
            return None
        p = self.p
        zi = pow(z, -1, p)
        zi2 = zi * zi % p
        return (x * zi2 % p, y * zi2 * zi % p)

    # -- hashing into the group -----------------------------------------------

    def hash_to_point(self, data: bytes) -> Point:
        """Deterministically map bytes to a nonzero subgroup element.

        Try-and-increment on x candidates derived from SHA-256, then a
        cofactor multiplication into the order-r subgroup.  Results are
        memoised: attribute points are reused heavily.
        """
        with self._cache_lock:
            cached = self._hash_cache.get(data)
        if cached is not None:
            return cached
        p = self.p
        blocks = (p.bit_length() + 255) // 256
        tag = _H2P_TAG + self.name.encode() + b":"
        ctr = 0
        while True:
            material = b"".join(
                hashlib.sha256(tag + ctr.to_bytes(4, "big") + i.to_bytes(2, "big") + data).digest()
                for i in range(blocks + 1)
            )
            x = int.from_bytes(material[: self.element_size + 8], "big") % p
            rhs = (x * x * x + x) % p
            y = pow(rhs, self._sqrt_exp, p)
            if y * y % p == rhs:
                if material[-1] & 1:
                    y = p - y
                point = self._jac_to_affine(self._jac_mul(self.h, (x, y)))
                if point is not None:
                    with self._cache_lock:
                        if len(self._hash_cache) > 4096:
                            self._hash_cache.clear()
                        self._hash_cache[data] = point
                    return point
            ctr += 1

    # -- pairing ----------------------------------------------------------

    def miller_precompute(self, point: tuple[int, int]) -> list:
        """Precompute the Miller-loop line coefficients for a fixed first argument.

        The double-and-add chain over the bits of r is run once in Jacobian
        coordinates; intermediate points and slope denominators are
        normalised with two batched inversions.  Each step collapses to
        ``(kind, lam, c)`` with line value lam*x_Q + c + y_Q*i.
        """
        p = self.p
        px, py = point
        chain: list[tuple[int, tuple[int, int, int]]] = []  # (kind, T before step)
        tx, ty, tz = px, py, 1
        for bit in bin(self.r)[3:]:
            chain.append((0, (tx, ty, tz)))
            tx, ty, tz = _jac_double(tx, ty, tz, p)
            if bit == "1":
                chain.append((1, (tx, ty, tz)))
                tx, ty, tz = _jac_add_affine(tx, ty, tz, px, py, p)

        # Batch-normalise every "before" point to affine.
        zs = [t[2] for _, t in chain]
        zinvs = _batch_inverse(zs, p)
        affine: list[tuple[int, int]] = []
        for (_, (x, y, _)), zi in zip(chain, zinvs):
            zi2 = zi * zi % p
            affine.append((x * zi2 % p, y * zi2 * zi % p))

        # Slope denominators: 2*y_T for doublings, x_T - x_P for additions.
        dens: list[int] = []
        vertical: list[bool] = []
        for (kind, _), (ax, ay) in zip(chain, affine):
            if kind == 0:
                dens.append(2 * ay % p)
                vertical.append(False)
            else:
                d = (ax - px) % p
                if d == 0:
                    # T == +-P; with prime order this is the final T = -P,
                    # a vertical line killed by the final exponentiation.
                    dens.append(1)
                    vertical.append(True)
                else:
                    dens.append(d)
                    vertical.append(False)
        dinvs = _batch_inverse(dens, p)

        steps: list = []
        for (kind, _), (ax, ay), dinv, vert in zip(chain, affine, dinvs, vertical):
            if vert:
                steps.append((2, 0, 0))
                continue
            if kind == 0:
                lam = (3 * ax * ax + 1) * dinv % p
            else:
                lam = (ay - py) * dinv % p
            c = (lam * ax - ay) % p
            steps.append((kind, lam, c))
        return steps

    def pair_with(self, steps: Sequence, q: tuple[int, int]) -> GtElement:
        """Pairing of a precomputed first argument against Q."""
        p = self.p
        xq, yq = q
        fa, fb = 1, 0
        for kind, lam, c in steps:
            if kind == 0:
                t = fa * fb
                fa, fb = (fa + fb) * (fa - fb) % p, (t + t) % p
            elif kind == 2:
                continue
            u = (lam * xq + c) % p
            fa, fb = (fa * u - fb * yq) % p, (fa * yq + fb * u) % p
        if fa == 0 and fb == 0:
            raise GroupError("degenerate pairing evaluation")
        return self._final_exp((fa, fb))

    def pair(self, a: tuple[int, int], b: tuple[int, int]) -> GtElement:
        """Symmetric pairing e(a, b) of two subgroup elements."""
        if a is None or b is None:
            raise GroupError("pairing argument is the identity")
        return self.pair_with(self.miller_precompute(a), b)

    def _final_exp(self, f: GtElement) -> GtElement:
        # f^((p^2-1)/r) = (conj(f) * f^-1)^h; the result has norm 1.
        p = self.p
        a, b = f
        norm_inv = pow(a * a + b * b, -1, p)
        # conj(f)/f = conj(f)^2 / (f * conj(f)) = (a - bi)^2 * norm_inv
        t = a * b % p
        za = (a + b) * (a - b) * norm_inv % p
        zb = (-(t + t)) * norm_inv % p
        return self.gt_exp((za, zb), self.h)

    # -- target-group (norm-1) arithmetic -----------------------------------

    def gt_identity(self) -> GtElement:
        return (1, 0)

    def gt_mul(self, x: GtElement, y: GtElement) -> GtElement:
        p = self.p
        a, b = x
        c, d = y
        ac = a * c
        bd = b * d
        return ((ac - bd) % p, ((a + b) * (c + d) - ac - bd) % p)

    def gt_inv(self, x: GtElement) -> GtElement:
        # Elements of mu_r have norm 1, so inversion is conjugation.
        return (x[0], (-x[1]) % self.p)

    def gt_exp(self, x: GtElement, k: int) -> GtElement:
        p = self.p
        if k < 0:
            x = self.gt_inv(x)
            k = -k
        ra, rb = 1, 0
        xa, xb = x
        for bit in bin(k)[2:]:
            # norm-1 squaring: (a+bi)^2 = (2a^2-1) + 2ab*i
            t = ra * rb
            ra = (ra * ra * 2 - 1) % p
            rb = (t + t) % p
            if bit == "1":
                ac = ra * xa
                bd = rb * xb
                ra, rb = (ac - bd) % p, ((ra + rb) * (xa + xb) - ac - bd) % p
        return (ra, rb)

    def gt_generator(self) -> GtElement:
        """e(g, g); cached per group instance."""
        if self._gt_generator is None:
            self._gt_generator = self.pair(self.g, self.g)
        return self._gt_generator

    def random_gt(self, rng: Optional[random.Random] = None) -> GtElement:
        return self.gt_exp(self.gt_generator(), self.random_scalar(rng))

    # -- serialization -----------------------------------------------------

    def point_to_bytes(self, point: Point) -> bytes:
        if point is None:
            raise GroupError("cannot serialize the identity point")
        n = self.element_size
        return point[0].to_bytes(n, "big") + point[1].to_bytes(n, "big")

    def point_from_bytes(self, blob: bytes) -> Point:
        n = self.element_size
        if len(blob) != 2 * n:
            raise GroupError(f"bad point encoding length {len(blob)}")
        point = (int.from_bytes(blob[:n], "big"), int.from_bytes(blob[n:], "big"))
        if not self.is_on_curve(point):
            raise GroupError("point not on curve")
        return point

    def gt_to_bytes(self, x: GtElement) -> bytes:
        n = self.element_size
        return x[0].to_bytes(n, "big") + x[1].to_bytes(n, "big")

    def gt_from_bytes(self, blob: bytes) -> GtElement:
        n = self.element_size
        if len(blob) != 2 * n:
            raise GroupError(f"bad target-element encoding length {len(blob)}")
        a, b = int.from_bytes(blob[:n], "big"), int.from_bytes(blob[n:], "big")
        if not (0 <= a < self.p and 0 <= b < self.p):
            raise GroupError("target element out of range")
        return (a, b)


_GROUP_CACHE: dict[str, PairingGroup] = {}
_GROUP_CACHE_LOCK = threading.Lock()


def get_group(profile: str = DEFAULT_PROFILE) -> PairingGroup:
    """Shared PairingGroup instance per profile (hash caches amortised)."""
    with _GROUP_CACHE_LOCK:
        group = _GROUP_CACHE.get(profile)
        if group is None:
            group = _GROUP_CACHE[profile] = PairingGroup(profile)
        return group


def _jac_double(x: int, y: int, z: int, p: int) -> tuple[int, int, int]:
    # dbl-2007-bl for y^2 = x^3 + a*x with a = 1.
    if z == 0 or y == 0:
        return 1, 1, 0
    xx = x * x % p
    yy = y * y % p
    yyyy = yy * yy % p
    zz = z * z % p
    s = 2 * ((x + yy) * (x + yy) - xx - yyyy) % p
    m = (3 * xx + zz * zz) % p
    t = (m * m - 2 * s) % p
    y3 = (m * (s - t) - 8 * yyyy) % p
    z3 = ((y + z) * (y + z) - yy - zz) % p
    return t, y3, z3


def _jac_add_affine(x1: int, y1: int, z1: int, x2: int, y2: int, p: int) -> tuple[int, int, int]:
    # madd-2007-bl: mixed Jacobian + affine addition.
    if z1 == 0:
        return x2, y2, 1
    z1z1 = z1 * z1 % p
    u2 = x2 * z1z1 % p
    s2 = y2 * z1 * z1z1 % p
    if u2 == x1 and s2 == y1:
        return _jac_double(x1, y1, z1, p)
    h = (u2 - x1) % p
    if h == 0:
        return 1, 1, 0  # x equal, y opposite: result is the identity
    hh = h * h % p
    i = 4 * hh % p
    j = h * i % p
    rr = 2 * (s2 - y1) % p
    v = x1 * i % p
    x3 = (rr * rr - j - 2 * v) % p
    y3 = (rr * (v - x3) - 2 * y1 * j) % p
    z3 = ((z1 + h) * (z1 + h) - z1z1 - hh) % p
    return x3, y3, z3


def _batch_inverse(values: list[int], p: int) -> list[int]:
    """Montgomery batch inversion; one modular inverse for the whole list."""
    n = len(values)
    if n == 0:
        return []
    prefix = [0] * n
    acc = 1
    for idx, v in enumerate(values):
        if v == 0:
            raise GroupError("batch inversion of zero")
        acc = acc * v % p
        prefix[idx] = acc
    inv = pow(acc, -1, p)
    out = [0] * n
    for idx in range(n - 1, 0, -1):
        out[idx] = inv * prefix[idx - 1] % p
        inv = inv * values[idx] % p
    out[0] = inv
    return out
