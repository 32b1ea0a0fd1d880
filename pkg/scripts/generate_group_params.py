#!/usr/bin/env python3
"""Deterministically derive the named pairing-group profiles.

Each profile is a supersingular curve y^2 = x^3 + x over F_p with
p = r*h - 1, p = 3 (mod 4), r a prime-order subgroup size.  All constants
are nothing-up-my-sleeve: r is the next prime at or above a SHA-256-derived
seed, h is the smallest multiple of four making p prime at the requested
width, and the generator is the cofactor multiple of the curve point with
the smallest admissible x coordinate.

Run from the repository root to regenerate `PROFILE_TABLE` for
src/slicegate/pairing.py.  Uses sympy for primality, so it is a dev tool,
not part of the package.
"""

import hashlib

from sympy import isprime, nextprime

PROFILES = [
    ("ss1536", 1536, 256),
    ("ss512", 512, 160),
    ("ss192", 192, 96),
]


def derive_seed_int(tag: str, bits: int) -> int:
    blocks = []
    for i in range((bits + 255) // 256):
        blocks.append(hashlib.sha256(f"slicegate:{tag}:{i}".encode()).digest())
    value = int.from_bytes(b"".join(blocks), "big") >> (len(blocks) * 256 - bits)
    return value | (1 << (bits - 1))


def find_subgroup_order(name: str, rbits: int) -> int:
    return int(nextprime(derive_seed_int(f"{name}:r", rbits)))


def find_field_prime(name: str, pbits: int, r: int) -> tuple[int, int]:
    # p = r*h - 1 with h = 4m keeps p = 3 (mod 4); scan m upward.
    m = derive_seed_int(f"{name}:h", pbits - r.bit_length() - 2)
    while True:
        h = 4 * m
        p = r * h - 1
        if p.bit_length() == pbits and isprime(p):
            return p, h
        m += 1


def find_generator(p: int, r: int, h: int) -> tuple[int, int]:
    x = 1
    while True:
        rhs = (x * x * x + x) % p
        y = pow(rhs, (p + 1) // 4, p)
        if y * y % p == rhs:
            gx, gy = scalar_mult(h, x, min(y, p - y), p)
            if gx is not None:
                assert scalar_mult(r, gx, gy, p) == (None, None)
                return gx, gy
        x += 1


def scalar_mult(k: int, x: int, y: int, p: int):
    rx, ry = None, None
    ax, ay = x, y
    while k:
        if k & 1:
            rx, ry = point_add(rx, ry, ax, ay, p)
        ax, ay = point_add(ax, ay, ax, ay, p)
        k >>= 1
    return rx, ry


def point_add(x1, y1, x2, y2, p):
    if x1 is None:
        return x2, y2
    if x2 is None:
        return x1, y1
    if x1 == x2 and (y1 + y2) % p == 0:
        return None, None
    if x1 == x2:
        lam = (3 * x1 * x1 + 1) * pow(2 * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return x3, (lam * (x1 - x3) - y1) % p


def main() -> None:
    print("PROFILE_TABLE = {")
    for name, pbits, rbits in PROFILES:
        r = find_subgroup_order(name, rbits)
        p, h = find_field_prime(name, pbits, r)
        gx, gy = find_generator(p, r, h)
        print(f'    "{name}": GroupProfile(')
        print(f'        name="{name}",')
        print(f"        p={p},")
        print(f"        r={r},")
        print(f"        h={h},")
        print(f"        gx={gx},")
        print(f"        gy={gy},")
        print("    ),")
    print("}")


if __name__ == "__main__":
    main()
