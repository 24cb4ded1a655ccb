"""
Exact synthesis of two-qubit propagators exp(-i tau [x (X_i + X_j) + zz Z_i Z_j]).

After a Hadamard on both qubits the generator preserves Z_i Z_j parity, so the
propagator splits into one SU(2) block on span{|00>, |11>} and one on
span{|01>, |10>}. Each block is factored as Rz·Rx·Rz; the Rz parts become
local Rz gates and the two Rx parts become a canonical exp(-i(a XX + b YY))
interaction, realized with three entangling gates.
"""

from typing import List, Tuple

import numpy as np
from scipy import linalg

_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def zxz_angles(unitary: np.ndarray) -> Tuple[float, float, float]:
    """
    Angles (l1, mu, l2) with unitary = Rz(l1) Rx(mu) Rz(l2)

    Args:
        unitary: 2x2 special unitary matrix (det = 1)

    Returns:
        Tuple of rotation angles in radians
    """
    u00 = unitary[0, 0]
    u01 = unitary[0, 1]
    mu = 2.0 * np.arctan2(abs(u01), abs(u00))
    angle_sum = -2.0 * np.angle(u00)
    angle_diff = -2.0 * np.angle(1j * u01)
    return (angle_sum + angle_diff) / 2.0, float(mu), (angle_sum - angle_diff) / 2.0


def canonical_interaction(i: int, j: int, a: float, b: float, c: float = 0.0) -> List[tuple]:
    """
    Gate tuples for exp(-i (a X_i X_j + b Y_i Y_j + c Z_i Z_j)), time ordered

    Conjugating by CNOT(i->j) maps XX -> X_i, ZZ -> Z_j and YY -> -X_i Z_j; the
    last factor is a CZ-conjugated X rotation, and the closing CNOT·CZ pair
    merges into a single CNOT dressed with phase gates.

    Returns:
        List of (kind, qubits, theta) tuples
    """
    gates: List[tuple] = [("CNOT", (i, j), None)]
    if c != 0.0:
        gates.append(("RZ", (j,), 2.0 * c))
    gates += [
        ("RX", (i,), 2.0 * a),
        ("CZ", (i, j), None),
        ("RX", (i,), -2.0 * b),
        ("SDG", (j,), None),
        ("CNOT", (i, j), None),
        ("S", (j,), None),
        ("SDG", (i,), None),
    ]
    return gates


def block_gates(i: int, j: int, x_coefficient: float, zz_coefficient: float, tau: float) -> List[tuple]:
    """
    Gate tuples for exp(-i tau [x (X_i + X_j) + zz Z_i Z_j]), time ordered

    Args:
        i, j: Qubit indices
        x_coefficient: Coefficient x of the transverse terms
        zz_coefficient: Coefficient zz of the coupling
        tau: Evolution time

    Returns:
        List of (kind, qubits, theta) tuples; exact including global phase
    """
    even = linalg.expm(-1j * tau * (2.0 * x_coefficient * _SIGMA_Z + zz_coefficient * _SIGMA_X))
    odd = linalg.expm(-1j * tau * zz_coefficient * _SIGMA_X)
    p1, q1, r1 = zxz_angles(even)
    p2, q2, r2 = zxz_angles(odd)

    gates: List[tuple] = [
        ("H", (i,), None),
        ("H", (j,), None),
        ("RZ", (i,), (r1 + r2) / 2.0),
        ("RZ", (j,), (r1 - r2) / 2.0),
    ]
    gates += canonical_interaction(i, j, (q1 + q2) / 4.0, (q2 - q1) / 4.0)
    gates += [
        ("RZ", (i,), (p1 + p2) / 2.0),
        ("RZ", (j,), (p1 - p2) / 2.0),
        ("H", (i,), None),
        ("H", (j,), None),
    ]
    return gates
