"""
Mathematical helper functions: exact integer linear algebra and planar
lattice geometry.

Integer matrices are numpy arrays of dtype=object holding Python ints, so
entries never overflow.
"""

import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy


def int_matrix(rows: Iterable[Iterable[int]]) -> np.ndarray:
    """Build an exact integer matrix (dtype=object) from nested iterables."""
    data = [[int(v) for v in row] for row in rows]
    if not data:
        return np.zeros((0, 0), dtype=object)
    return np.array(data, dtype=object).reshape(len(data), len(data[0]))


def int_vector(values: Iterable[int]) -> np.ndarray:
    """Build an exact integer vector (dtype=object)."""
    return np.array([int(v) for v in values], dtype=object)


def int_identity(n: int) -> np.ndarray:
    """Exact n x n identity matrix."""
    eye = np.zeros((n, n), dtype=object)
    for i in range(n):
        eye[i, i] = 1
    return eye


def int_zeros(*shape: int) -> np.ndarray:
    """Exact zero array."""
    out = np.empty(shape, dtype=object)
    out.fill(0)
    return out


def is_identity(matrix: np.ndarray) -> bool:
    """True when matrix equals the identity exactly."""
    n = matrix.shape[0]
    return bool((matrix == int_identity(n)).all())


def matrix_key(matrix: np.ndarray) -> Tuple[int, ...]:
    """Hashable key of an integer matrix."""
    return tuple(int(v) for v in matrix.ravel())


def integer_inverse(matrix: np.ndarray) -> np.ndarray:
    """
    Exact inverse of a unimodular integer matrix.

    Raises:
        ValueError: if the matrix is not invertible over the integers.
    """
    m = sympy.Matrix(matrix.tolist())
    det = m.det()
    if det not in (1, -1):
        raise ValueError(f"matrix is not unimodular (det={det})")
    inv = m.adjugate() * det
    return int_matrix(inv.tolist())


def exgcd(a: int, b: int) -> np.ndarray:
    """
    Extended GCD as a row operation.

    Returns:
        A 2x2 integer matrix M of determinant 1 with M @ [a, b] = [gcd(a, b), 0].
    """
    a_sign = -1 if a < 0 else 1
    a *= a_sign
    b_sign = -1 if b < 0 else 1
    b *= b_sign

    # Euclid on the column [a, b], tracking row operations in the augmented part.
    M = np.array([[b, 0, 1],
                  [a, 1, 0]], dtype=object)
    while M[1, 0] != 0:
        q = M[0, 0] // M[1, 0]
        M[0] -= q * M[1]
        M = M[::-1].copy()

    g = M[0, 0]
    M = M[:, 1:]
    M *= np.array([a_sign, b_sign], dtype=object)

    if g != 0:
        M[1] = [-b_sign * b // g, a_sign * a // g]
    return M


def hermite_normal_form(rows: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    """
    Row-style Hermite normal form with transform.

    Args:
        rows: m x n integer matrix.

    Returns:
        (H, U, pivots) with U @ A = H, U unimodular, H in row echelon form
        with positive pivots, entries above each pivot reduced into
        [0, pivot), zero rows at the bottom. pivots lists pivot columns.
    """
    A = int_matrix(rows) if not isinstance(rows, np.ndarray) else rows.astype(object).copy()
    if A.size == 0:
        m = A.shape[0] if A.ndim == 2 else 0
        return A, int_identity(m), []
    m, n = A.shape
    H = A.copy()
    U = int_identity(m)
    pivots: List[int] = []
    r = 0
    for j in range(n):
        if r >= m:
            break
        nonzero = [i for i in range(r, m) if H[i, j] != 0]
        if not nonzero:
            continue
        for i in nonzero:
            if i == r:
                continue
            M = exgcd(H[r, j], H[i, j])
            H[[r, i]] = M @ H[[r, i]]
            U[[r, i]] = M @ U[[r, i]]
        if H[r, j] == 0:
            continue
        if H[r, j] < 0:
            H[r] = -H[r]
            U[r] = -U[r]
        for i in range(r):
            q = H[i, j] // H[r, j]
            if q:
                H[i] = H[i] - q * H[r]
                U[i] = U[i] - q * U[r]
        pivots.append(j)
        r += 1
    return H, U, pivots


def lattice_rank(rows: Sequence[Sequence[int]]) -> int:
    """Rank of the Z-span of the given integer vectors."""
    if len(rows) == 0:
        return 0
    _, _, pivots = hermite_normal_form(rows)
    return len(pivots)


def hnf_basis(rows: Sequence[Sequence[int]]) -> List[List[int]]:
    """Nonzero rows of the Hermite normal form, as plain lists."""
    if len(rows) == 0:
        return []
    H, _, pivots = hermite_normal_form(rows)
    return [[int(v) for v in H[i]] for i in range(len(pivots))]


def solve_integer_left(A: np.ndarray, c: Sequence[int]) -> Optional[np.ndarray]:
    """
    Solve n @ A = c over the integers.

    Args:
        A: r x k integer matrix.
        c: length-k integer vector.

    Returns:
        An integer vector n of length r, or None when no integer solution exists.
    """
    A = A.astype(object)
    c = int_vector(c)
    r, k = A.shape
    if r == 0:
        return int_vector([]) if all(v == 0 for v in c) else None
    H, U, pivots = hermite_normal_form(A)
    # n A = c  <=>  (n U^-1) H = c ; solve m H = c by forward substitution on pivots.
    m = int_zeros(r)
    for i, p in enumerate(pivots):
        acc = c[p] - sum(m[q] * H[q, p] for q in range(i))
        if acc % H[i, p] != 0:
            return None
        m[i] = acc // H[i, p]
    if not (m @ H == c).all():
        return None
    return m @ U


def smith_invariants(A: np.ndarray) -> List[int]:
    """Nonzero invariant factors of an integer matrix (via sympy)."""
    from sympy.matrices.normalforms import smith_normal_form
    from sympy import ZZ

    if A.size == 0:
        return []
    snf = smith_normal_form(sympy.Matrix(A.tolist()), domain=ZZ)
    diag = [abs(int(snf[i, i])) for i in range(min(snf.shape))]
    return [d for d in diag if d != 0]


def segment_distance(p: complex, a: complex, b: complex) -> float:
    """Distance from point p to the segment [a, b] in the complex plane."""
    d = b - a
    length2 = (d * d.conjugate()).real
    if length2 == 0:
        return abs(p - a)
    t = ((p - a) * d.conjugate()).real / length2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * d))


def real_coordinates(z: complex, w1: complex, w2: complex) -> Tuple[float, float]:
    """Real coordinates (a, b) with z = a*w1 + b*w2."""
    det = w1.real * w2.imag - w1.imag * w2.real
    if det == 0:
        raise ZeroDivisionError("periods are R-linearly dependent")
    a = (z.real * w2.imag - z.imag * w2.real) / det
    b = (w1.real * z.imag - w1.imag * z.real) / det
    return a, b


def gauss_reduce(w1: complex, w2: complex) -> Tuple[complex, complex]:
    """
    Lagrange-Gauss reduction of a planar lattice basis.

    Returns:
        (v1, v2) spanning the same lattice with |v1| <= |v2| and
        |Re(v1 * conj(v2))| <= |v1|^2 / 2.
    """
    v1, v2 = complex(w1), complex(w2)
    if abs(v1) > abs(v2):
        v1, v2 = v2, v1
    for _ in range(200):
        mu = round((v2 * v1.conjugate()).real / abs(v1) ** 2)
        v2 = v2 - mu * v1
        if abs(v2) >= abs(v1):
            break
        v1, v2 = v2, v1
    return v1, v2


def covering_radius(w1: complex, w2: complex) -> float:
    """Covering radius of the lattice spanned by w1, w2."""
    v1, v2 = gauss_reduce(w1, w2)
    if (v1 * v2.conjugate()).real < 0:
        v2 = -v2
    area = abs((v1.conjugate() * v2).imag) / 2.0
    if area == 0:
        return math.inf
    return abs(v1) * abs(v2) * abs(v2 - v1) / (4.0 * area)


def nearest_lattice_point(z: complex, w1: complex, w2: complex) -> Tuple[complex, int, int]:
    """
    Lattice point of Z*w1 + Z*w2 nearest to z.

    Returns:
        (point, a, b) with point = a*w1 + b*w2.
    """
    v1, v2 = gauss_reduce(w1, w2)
    x, y = real_coordinates(z, v1, v2)
    best = None
    for i in (math.floor(x), math.floor(x) + 1):
        for j in (math.floor(y), math.floor(y) + 1):
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    cand = (i + di) * v1 + (j + dj) * v2
                    dist = abs(z - cand)
                    if best is None or dist < best[0]:
                        best = (dist, cand)
    point = best[1]
    a, b = real_coordinates(point, w1, w2)
    return point, int(round(a)), int(round(b))


def lcm_all(values: Iterable[int]) -> int:
    """Least common multiple of positive integers (1 for an empty input)."""
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out
