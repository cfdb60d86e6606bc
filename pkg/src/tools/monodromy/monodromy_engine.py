"""
Monodromy Engine
Exact integer layer over a table of generator data (rho_i, c_i): cocycle
composition, extended matrices, kernel-word search, relative monodromy
lattice rank, the coboundary decision and orbit lattices.

Everything here is integer arithmetic on dtype=object arrays.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from ...core.errors import ConfigInvalid, NotKernelWord
from ..topology.topology_engine import (
    LoopWord,
    check_word,
    commutator,
    conjugate,
    free_reduce,
    invert,
    letters_of,
    multiply,
)
from ...utils.async_utils import parallel_map
from ...utils.math_helpers import (
    hermite_normal_form,
    int_identity,
    int_matrix,
    int_vector,
    int_zeros,
    integer_inverse,
    is_identity,
    matrix_key,
    smith_invariants,
    solve_integer_left,
)

logger = logging.getLogger(__name__)


def block_form(g: int) -> np.ndarray:
    """Direct sum of g blocks [[0, 1], [-1, 0]]."""
    P = int_zeros(2 * g, 2 * g)
    for k in range(g):
        P[2 * k, 2 * k + 1] = 1
        P[2 * k + 1, 2 * k] = -1
    return P


def interleave_permutation(g: int) -> np.ndarray:
    """Q with Q x_block = x_interleaved, (a1, b1, a2, b2, ...) -> (a1, a2, ..., b1, b2, ...)."""
    Q = int_zeros(2 * g, 2 * g)
    for k in range(g):
        Q[k, 2 * k] = 1
        Q[g + k, 2 * k + 1] = 1
    return Q


def to_interleaved(matrix: np.ndarray) -> np.ndarray:
    """Matrix in the interleaved basis, where the form becomes (0 I; -I 0)."""
    g = matrix.shape[0] // 2
    Q = interleave_permutation(g)
    return Q @ matrix @ Q.T


def is_symplectic(matrix: np.ndarray, form: np.ndarray) -> bool:
    """M^T P M == P exactly."""
    return bool((matrix.T @ form @ matrix == form).all())


def is_level_two(matrix: np.ndarray) -> bool:
    """M congruent to the identity mod 2."""
    diff = matrix - int_identity(matrix.shape[0])
    return all(int(v) % 2 == 0 for v in diff.ravel())


def acts_trivially_on_factor(matrix: np.ndarray, k: int) -> bool:
    """Identity on the 2x2 block of factor k and no mixing with other factors."""
    n = matrix.shape[0]
    rows = range(2 * k, 2 * k + 2)
    for i in rows:
        for j in range(n):
            expected = 1 if i == j else 0
            if matrix[i, j] != expected or matrix[j, i] != expected:
                return False
    return True


@dataclass
class CocycleTable:
    """Generator data of the extended representation: rho_i and c_i per letter."""
    g: int
    rhos: List[np.ndarray]
    cocycles: List[np.ndarray]
    form: Optional[np.ndarray] = None
    words: Optional[List[LoopWord]] = None
    _inverses: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False, init=False)

    def __post_init__(self):
        if self.form is None:
            self.form = block_form(self.g)
        self.rhos = [m if isinstance(m, np.ndarray) and m.dtype == object else int_matrix(m) for m in self.rhos]
        self.cocycles = [c if isinstance(c, np.ndarray) and c.dtype == object else int_vector(c)
                         for c in self.cocycles]
        if len(self.rhos) != len(self.cocycles):
            raise ConfigInvalid("cocycle table needs one cocycle per monodromy matrix")

    @property
    def count(self) -> int:
        return len(self.rhos)

    @classmethod
    def identity(cls, g: int, n: int) -> "CocycleTable":
        return cls(g, [int_identity(2 * g) for _ in range(n)], [int_zeros(2 * g) for _ in range(n)])

    def problems(self) -> List[str]:
        """Well-formedness violations (empty when the table is consistent)."""
        out = []
        size = 2 * self.g
        for i, (rho, c) in enumerate(zip(self.rhos, self.cocycles), start=1):
            if rho.shape != (size, size) or c.shape != (size,):
                out.append(f"generator {i}: wrong shape")
            elif not is_symplectic(rho, self.form):
                out.append(f"generator {i}: monodromy does not preserve the form")
        return out

    def letter(self, x: int) -> Tuple[np.ndarray, np.ndarray]:
        """(rho, c) of a signed letter; inverses from the cocycle law."""
        if x > 0:
            return self.rhos[x - 1], self.cocycles[x - 1]
        if x not in self._inverses:
            rho_inv = integer_inverse(self.rhos[-x - 1])
            c_inv = -(self.cocycles[-x - 1] @ rho_inv.T)
            self._inverses[x] = (rho_inv, c_inv)
        return self._inverses[x]

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "g": self.g,
            "generators": [
                {"rho": [[int(v) for v in row] for row in rho], "c": [int(v) for v in c]}
                for rho, c in zip(self.rhos, self.cocycles)
            ],
        }
        if self.words is not None:
            data["words"] = [list(w) for w in self.words]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CocycleTable":
        try:
            gens = data["generators"]
            table = cls(
                g=int(data["g"]),
                rhos=[int_matrix(item["rho"]) for item in gens],
                cocycles=[int_vector(item["c"]) for item in gens],
                words=[tuple(w) for w in data["words"]] if "words" in data else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigInvalid(f"malformed cocycle table: {e}") from e
        return table


def compose_cocycle(table: CocycleTable, word: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """(rho(w), c(w)) with c(w1 w2) = c(w1) + c(w2) rho(w1)^T."""
    word = check_word(list(word), table.count)
    rho = int_identity(2 * table.g)
    c = int_zeros(2 * table.g)
    for x in word:
        rho_x, c_x = table.letter(x)
        c = c + c_x @ rho.T
        rho = rho @ rho_x
    return rho, c


def extended_matrix(table: CocycleTable, word: Sequence[int]) -> np.ndarray:
    """Block matrix (rho(w), c(w)^T; 0, 1)."""
    rho, c = compose_cocycle(table, word)
    n = 2 * table.g
    E = int_identity(n + 1)
    E[:n, :n] = rho
    E[:n, n] = c
    return E


# ---------------------------------------------------------------------------
# Kernel words
# ---------------------------------------------------------------------------

@dataclass
class KernelSearch:
    """Kernel words found under the stated bounds."""
    words: List[LoopWord]
    max_len: int
    nodes: int
    truncated: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "count": len(self.words),
            "max_len": self.max_len,
            "bfs_nodes": self.nodes,
            "truncated": self.truncated,
        }


class _WordCollector:
    def __init__(self, limit: int):
        self.limit = limit
        self.words: List[LoopWord] = []
        self.seen = set()
        self.truncated = False

    def add(self, word: Iterable[int]) -> bool:
        word = free_reduce(word)
        if not word or word in self.seen:
            return True
        if len(self.words) >= self.limit:
            self.truncated = True
            return False
        self.seen.add(word)
        self.words.append(word)
        return True


def short_words(n: int, max_len: int) -> List[LoopWord]:
    """Nonempty reduced words of length <= max_len, shortest first."""
    out: List[LoopWord] = []
    layer: List[LoopWord] = [()]
    for _ in range(max_len):
        layer = [w + (x,) for w in layer for x in letters_of(n) if not (w and w[-1] == -x)]
        out.extend(layer)
    return out


def _add_conjugates(found: _WordCollector, words: Sequence[LoopWord], conjugators: Sequence[LoopWord]):
    for w in words:
        for u in conjugators:
            if not found.add(conjugate(u, w)):
                return


def _breadth_first_kernel(table: CocycleTable, max_len: int, max_nodes: int) -> Tuple[List[LoopWord], int, bool]:
    """
    Kernel words met while enumerating reduced words by increasing length.

    Only the first word reaching a monodromy matrix is extended; a later
    word w with the same image u gives the kernel word w u^-1.
    """
    words: List[LoopWord] = []
    identity = int_identity(2 * table.g)
    images: Dict[Tuple[int, ...], LoopWord] = {matrix_key(identity): ()}
    queue = deque([((), identity)])
    nodes = 0
    while queue:
        word, rho = queue.popleft()
        if len(word) >= max_len:
            continue
        for x in letters_of(table.count):
            if word and word[-1] == -x:
                continue
            if nodes >= max_nodes:
                return words, nodes, True
            nodes += 1
            child = word + (x,)
            child_rho = rho @ table.letter(x)[0]
            key = matrix_key(child_rho)
            earlier = images.get(key)
            if earlier is None:
                images[key] = child
                queue.append((child, child_rho))
            else:
                words.append(multiply(child, invert(earlier)))
    return words, nodes, False


def kernel_search(table: CocycleTable, max_len: int, seeds: Sequence[Sequence[int]] = (),
                  settings=None) -> KernelSearch:
    """
    Words with trivial monodromy from seeds, breadth-first search, commuting pairs and conjugation.

    Breadth-first search over reduced words up to max_len reports a word
    when its monodromy is the identity, and w u^-1 when w repeats the
    monodromy of an earlier word u.
    """
    if settings is None:
        from ...config import config
        settings = config.monodromy
    if max_len < 1:
        raise ConfigInvalid(f"max_len must be at least 1, got {max_len}")
    n = table.count
    found = _WordCollector(settings.max_kernel_words)

    for seed in seeds:
        seed = check_word(list(seed), n)
        rho, _ = compose_cocycle(table, seed)
        if is_identity(rho):
            found.add(seed)
        else:
            logger.warning(f"Seed word {list(seed)} has nontrivial monodromy; skipped")

    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            a, b = table.rhos[i - 1], table.rhos[j - 1]
            if (a @ b == b @ a).all():
                found.add(commutator((i,), (j,)))

    conjugators = short_words(n, settings.conjugator_len)
    _add_conjugates(found, list(found.words), conjugators)

    searched, nodes, capped = _breadth_first_kernel(table, max_len, settings.max_bfs_nodes)
    if capped:
        logger.warning(f"Kernel search stopped at {nodes} nodes (max_bfs_nodes)")
    for w in searched:
        found.add(w)
    _add_conjugates(found, searched, conjugators)
    logger.info(f"Kernel search: {len(found.words)} words (max_len {max_len}, {nodes} nodes)")
    return KernelSearch(found.words, max_len, nodes, capped or found.truncated)


def kernel_words(table: CocycleTable, max_len: int, seeds: Sequence[Sequence[int]] = (),
                 settings=None) -> List[LoopWord]:
    return kernel_search(table, max_len, seeds, settings).words


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------

@dataclass
class LatticeReport:
    """Z-span of the cocycle vectors of kernel words."""
    rank: int
    hnf_basis: List[List[int]]
    witnesses: List[Tuple[LoopWord, List[int]]]
    search: Optional[KernelSearch] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "rank": self.rank,
            "hnf_basis": self.hnf_basis,
            "witness_count": len(self.witnesses),
            "witnesses": [{"word": list(w), "c": c} for w, c in self.witnesses if any(c)][:32],
        }
        if self.search is not None:
            data["search"] = self.search.to_dict()
        return data


def relative_lattice_rank(table: CocycleTable, words: Sequence[Sequence[int]]) -> LatticeReport:
    """
    HNF rank of the cocycles of kernel words.

    Raises:
        NotKernelWord: some word has nontrivial monodromy.
    """
    def evaluate(word):
        rho, c = compose_cocycle(table, word)
        if not is_identity(rho):
            raise NotKernelWord(f"word {list(word)} has nontrivial monodromy")
        return tuple(word), [int(v) for v in c]

    witnesses = parallel_map(evaluate, [tuple(w) for w in words])
    rows = [c for _, c in witnesses]
    if not rows:
        return LatticeReport(0, [], [])
    H, _, pivots = hermite_normal_form(rows)
    basis = [[int(v) for v in H[i]] for i in range(len(pivots))]
    return LatticeReport(len(pivots), basis, witnesses)


class CoboundaryStatus(Enum):
    """Outcome of the coboundary decision."""
    COBOUNDARY = "coboundary"
    NOT_COBOUNDARY = "not_coboundary"
    INCONSISTENT_INPUT = "inconsistent_input"


@dataclass
class CoboundaryResult:
    status: CoboundaryStatus
    witness: Optional[List[int]] = None
    rational_witness: Optional[List[Fraction]] = None
    invariants: List[int] = field(default_factory=list)
    problems: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "witness": self.witness,
            "rational_witness": [str(v) for v in self.rational_witness] if self.rational_witness else None,
            "smith_invariants": self.invariants,
            "problems": self.problems,
        }


def coboundary_system(table: CocycleTable) -> Tuple[np.ndarray, np.ndarray]:
    """(A, c) with the coboundary condition written as n A = c."""
    blocks = [rho.T - int_identity(2 * table.g) for rho in table.rhos]
    A = np.hstack(blocks) if blocks else int_zeros(2 * table.g, 0)
    c = np.concatenate(table.cocycles) if table.cocycles else int_zeros(0)
    return A, c


def coboundary_solve(table: CocycleTable) -> CoboundaryResult:
    """Decide whether c_i = n (rho_i^T - I) for one integer vector n and every generator."""
    problems = table.problems()
    if problems:
        return CoboundaryResult(CoboundaryStatus.INCONSISTENT_INPUT, problems=problems)
    A, c = coboundary_system(table)
    invariants = smith_invariants(A)
    n = solve_integer_left(A, c)
    if n is not None:
        return CoboundaryResult(CoboundaryStatus.COBOUNDARY, witness=[int(v) for v in n], invariants=invariants)
    return CoboundaryResult(CoboundaryStatus.NOT_COBOUNDARY, rational_witness=_rational_witness(A, c),
                            invariants=invariants)


def _rational_witness(A: np.ndarray, c: np.ndarray) -> Optional[List[Fraction]]:
    """A rational n with n A = c, when one exists."""
    if A.size == 0:
        return None
    system = sympy.Matrix(A.T.tolist())
    try:
        solution, params = system.gauss_jordan_solve(sympy.Matrix(c.tolist()))
    except ValueError:
        return None
    solution = solution.subs({p: 0 for p in params})
    return [Fraction(int(v.p), int(v.q)) for v in solution]


def orbit_lattice_rank(table: CocycleTable, v: Sequence[int], max_rounds: Optional[int] = None) -> int:
    """Rank of the Z-span of the orbit of v under the rho_i (acting as v -> v rho_i^T)."""
    if max_rounds is None:
        from ...config import config
        max_rounds = config.monodromy.orbit_max_rounds
    v = int_vector(v)
    if all(x == 0 for x in v):
        raise ConfigInvalid("orbit_lattice_rank needs a nonzero vector")
    actions = []
    for i in range(table.count):
        rho, _ = table.letter(i + 1)
        rho_inv, _ = table.letter(-(i + 1))
        actions.extend([rho.T, rho_inv.T])
    basis = [list(v)]
    for _ in range(max_rounds):
        rows = basis + [list(int_vector(r) @ a) for r in basis for a in actions]
        H, _, pivots = hermite_normal_form(rows)
        new_basis = [[int(x) for x in H[i]] for i in range(len(pivots))]
        if new_basis == basis:
            break
        basis = new_basis
    return len(basis)

