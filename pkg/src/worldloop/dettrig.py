"""Bit-reproducible trigonometry in the degree domain.

Platform libm sin/cos implementations round differently, which would break
the byte-identical-frames contract of the simulator. The functions here use
only IEEE-754 double add/mul/div (each correctly rounded) in a fixed
evaluation order, so every platform produces the same bits:

* range reduction is exact: ``math.fmod(deg, 360)`` is exactly rounded, and
  quadrant folding subtracts exact multiples of 90;
* the residual angle (|x| <= 45 deg) is converted to radians with one rounded
  multiply and fed to fixed truncated Taylor polynomials (Horner order).

Polynomial truncation error is below 3e-14, far inside every tolerance used
by the toolkit; rounding of the fixed op sequence is identical everywhere.
"""

from __future__ import annotations

import math

_DEG2RAD = math.pi / 180.0

# 1/(2k+1)! and 1/(2k)! factors, written as literals so the source pins the
# exact doubles in play.
_S1 = -1.0 / 6.0
_S2 = 1.0 / 120.0
_S3 = -1.0 / 5040.0
_S4 = 1.0 / 362880.0
_S5 = -1.0 / 39916800.0
_S6 = 1.0 / 6227020800.0
_C1 = -1.0 / 2.0
_C2 = 1.0 / 24.0
_C3 = -1.0 / 720.0
_C4 = 1.0 / 40320.0
_C5 = -1.0 / 3628800.0
_C6 = 1.0 / 479001600.0
_C7 = -1.0 / 87178291200.0


def _sin_poly(x: float) -> float:
    x2 = x * x
    return x * (1.0 + x2 * (_S1 + x2 * (_S2 + x2 * (_S3 + x2 * (_S4 + x2 * (_S5 + x2 * _S6))))))


def _cos_poly(x: float) -> float:
    x2 = x * x
    return 1.0 + x2 * (_C1 + x2 * (_C2 + x2 * (_C3 + x2 * (_C4 + x2 * (_C5 + x2 * (_C6 + x2 * _C7))))))


def sincos_deg(deg: float) -> tuple[float, float]:
    """(sin, cos) of an angle in degrees, bit-identical across platforms."""
    r = math.fmod(deg, 360.0)
    if r < 0.0:
        r += 360.0
    # Fold into quadrant k with residual in [-45, 45].
    k = int(math.floor((r + 45.0) / 90.0))
    x = (r - 90.0 * k) * _DEG2RAD
    k &= 3
    s, c = _sin_poly(x), _cos_poly(x)
    if k == 0:
        return s, c
    if k == 1:
        return c, -s
    if k == 2:
        return -s, -c
    return -c, s


def sin_deg(deg: float) -> float:
    return sincos_deg(deg)[0]


def cos_deg(deg: float) -> float:
    return sincos_deg(deg)[1]


def tan_deg(deg: float) -> float:
    s, c = sincos_deg(deg)
    return s / c


def view_direction(yaw_deg: float, pitch_deg: float) -> tuple[float, float, float]:
    """Unit view vector in the z-up world frame.

    Convention (documented once, used everywhere): yaw 0 looks along +X, yaw
    increases counter-clockwise seen from above (so YawLeft is +yaw), pitch
    is positive upward.
    """
    sy, cy = sincos_deg(yaw_deg)
    sp, cp = sincos_deg(pitch_deg)
    return cp * cy, cp * sy, sp
