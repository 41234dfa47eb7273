#!/usr/bin/env python3
"""Generate the Hankel golden table (data/hankel_golden.csv).

Reference values for H0^(1), H1^(1), H2^(1) computed with mpmath at 50 digits
and rounded to the nearest double.  The grid covers the argument range the
solver actually sees: z = kappa*r with Im kappa >= 0, |z| from 1e-8 up to 1e3,
on rays through the upper half-plane plus a thin band just below the real axis
(roundoff can push Im z slightly negative).  Moduli on the pi/2 ray are capped
so exp(-Im z) stays well inside double range.
"""

import csv
import math
import os

import mpmath as mp

mp.mp.dps = 50

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "hankel_golden.csv")

IM_CAP = 575.0  # |H0| ~ exp(-Im z); keep above ~1e-250


def grid():
    rays = [0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2]
    moduli = [10 ** (-8 + k / 8) for k in range(89)]          # 1e-8 .. 1e3
    cross = [8 + 16 * k / 32 for k in range(33)]              # dense near crossover
    pts = []
    for arg in rays:
        for r in moduli + cross:
            if r * math.sin(arg) > IM_CAP:
                continue
            pts.append(mp.mpc(r * math.cos(arg), r * math.sin(arg)))
    # slightly negative imaginary part, small moduli only
    for r in [10 ** (-8 + k / 4) for k in range(38)]:         # 1e-8 .. ~2e1
        a = -math.pi / 64
        pts.append(mp.mpc(r * math.cos(a), r * math.sin(a)))
    return pts


def hankel1(nu, z):
    # mpmath's hankel1 goes through J + iY, which cancels by ~e^{2 Im z} and
    # underflows the working precision high on the imaginary axis.  The
    # Macdonald function K_nu(-iz) decays there with no cancellation.
    return -2j / mp.pi * (1j) ** (-nu) * mp.besselk(nu, -1j * z)


def main():
    rows = []
    for z in grid():
        h0 = hankel1(0, z)
        h1 = hankel1(1, z)
        h2 = hankel1(2, z)
        rec = [z.real, z.imag, h0.real, h0.imag, h1.real, h1.imag, h2.real, h2.imag]
        rows.append(["%.17e" % float(x) for x in rec])
    with open(OUT, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["re_z", "im_z", "re_h0", "im_h0", "re_h1", "im_h1", "re_h2", "im_h2"])
        w.writerows(rows)
    print("wrote %d rows to %s" % (len(rows), OUT))


if __name__ == "__main__":
    main()
