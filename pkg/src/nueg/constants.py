"""Closed-form constants used across the checkers.

Each value is recomputed from its defining expression at import time; no
decimal literals are hard-coded except documented reference digits in the
tests.
"""

import math


def graf_schenker_constant():
    """Localization-error constant of the tetrahedral decoupling bound."""
    return math.pi * (1.0 + 2.0 * math.sqrt(2.0)) / 4.0


def thomas_fermi_constant():
    """Semiclassical kinetic prefactor (3/5)(2 pi)^2 (4 pi / 3)^(-2/3)."""
    return 0.6 * (2.0 * math.pi) ** 2 * (4.0 * math.pi / 3.0) ** (-2.0 / 3.0)


def lieb_narnhofer_floor():
    """Lower bound on the 3D Coulomb uniform-gas constant,
    -(3/5) (9 pi / 2)^(1/3) ~ -1.4508."""
    return -0.6 * (4.5 * math.pi) ** (1.0 / 3.0)


def lieb_oxford_3d_coulomb():
    """Best current Lieb-Oxford constant for d=3, s=1."""
    return 1.58


def morrey_constant(p):
    """Holder-seminorm constant on reference-shaped tetrahedra,
    2 * 24^(1/p) (p-1)/(p+1), valid for p > 3."""
    if p <= 3:
        raise ValueError(f"Morrey constant needs p > 3, got {p}")
    return 2.0 * 24.0 ** (1.0 / p) * (p - 1.0) / (p + 1.0)


C_GS = graf_schenker_constant()
C_TF = thomas_fermi_constant()
C_LO_3D = lieb_oxford_3d_coulomb()
LIEB_NARNHOFER_FLOOR = lieb_narnhofer_floor()


def constants_table():
    return {
        "c_gs": C_GS,
        "c_tf": C_TF,
        "c_lo_3d_coulomb": C_LO_3D,
        "lieb_narnhofer_floor": LIEB_NARNHOFER_FLOOR,
        "c_morrey_p4": morrey_constant(4.0),
        "c_morrey_p6": morrey_constant(6.0),
    }
