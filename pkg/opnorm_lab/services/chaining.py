"""
Metric complexity engine: covering numbers, entropy radii, admissible
sequences, gamma_alpha upper estimates, Dudley integrals, product-space
sequences and the uniform operator-norm bound.

Greedy quantities are read off one farthest-point order that starts at the
exact 1-center; prefixes of that order are the nested sets T_k. Small spaces
additionally get exhaustive (exact) answers.
"""

import itertools
import logging
import math
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from opnorm_lab.models.chaining_models import (
    AdmissibleSequence,
    CalibrationResult,
    ChainingEstimate,
    FiniteMetricSpace,
    TailBound,
    level_capacity,
)
from opnorm_lab.models.process_models import ParamGrid, ParamMatrixFamily
from opnorm_lab.services.subgauss import family_orlicz_constant, sup_operator_norm
from opnorm_lab.utils.errors import ArgumentError, ConfigError, InvariantError
from opnorm_lab.utils.parallel import ordered_map
from opnorm_lab.utils.rng import STREAM_SAMPLING, keyed_generator, split_seed

logger = logging.getLogger(__name__)

EXACT_COVER_LIMIT = 12
EXACT_GAMMA_LIMIT = 8
PRODUCT_TOL = 1e-9
MIN_CALIBRATION_REPS = 20


class GreedyOrder(NamedTuple):
    order: np.ndarray
    radii: np.ndarray  # radii[m - 1]: covering radius of the first m centers


def level_count(n: int) -> int:
    """Smallest k with N_k >= n; all later levels contain the whole space."""
    k = 0
    while level_capacity(k) < n:
        k += 1
    return k


def greedy_order(space: FiniteMetricSpace) -> GreedyOrder:
    """
    Farthest-point order starting at the exact 1-center.

    Ties go to the lowest point index.
    """
    dist = space.dist
    start = int(np.argmin(dist.max(axis=1)))
    nearest = dist[start].copy()
    order = [start]
    radii = [float(nearest.max())]
    for _ in range(1, space.n):
        nxt = int(np.argmax(nearest))
        order.append(nxt)
        nearest = np.minimum(nearest, dist[nxt])
        radii.append(float(nearest.max()))
    return GreedyOrder(order=np.asarray(order, dtype=np.int64), radii=np.asarray(radii))


def exact_cover_radii(space: FiniteMetricSpace) -> np.ndarray:
    """
    Exact m-center radii for m = 1..n by exhaustive search (small spaces only).
    """
    n = space.n
    if n > EXACT_COVER_LIMIT:
        raise ArgumentError(f"exhaustive covering is limited to n <= {EXACT_COVER_LIMIT}")
    dist = space.dist
    radii = np.zeros(n)
    for m in range(1, n):
        radii[m - 1] = min(
            float(dist[:, list(centers)].min(axis=1).max())
            for centers in itertools.combinations(range(n), m)
        )
    return radii


def _cover_radii(space: FiniteMetricSpace) -> np.ndarray:
    if space.n <= EXACT_COVER_LIMIT:
        return exact_cover_radii(space)
    return greedy_order(space).radii


def covering_number(space: FiniteMetricSpace, eps: float) -> int:
    """
    Number of closed eps-balls needed to cover the space.

    Greedy upper bound; exact for n <= 12.

    Raises:
        ArgumentError: If eps <= 0.
    """
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    radii = _cover_radii(space)
    return int(np.argmax(radii <= eps)) + 1


def entropy_radii(space: FiniteMetricSpace, kmax: int) -> List[float]:
    """
    Entropy radii e_0, ..., e_kmax with at most N_k centers each.

    Greedy (farthest-point) estimates; exact for n <= 12.
    """
    if kmax < 0:
        raise ArgumentError(f"kmax must be non-negative, got {kmax}")
    radii = _cover_radii(space)
    n = space.n
    return [float(radii[min(level_capacity(k), n) - 1]) for k in range(kmax + 1)]


def dudley_integral(space: FiniteMetricSpace) -> float:
    """
    Integral of sqrt(log N(eps)) over (0, diam], exact for the step function N-hat.
    """
    radii = _cover_radii(space)
    if radii.size < 2:
        return 0.0
    m = np.arange(2, radii.size + 1)
    return float(np.sum(np.sqrt(np.log(m)) * (radii[:-1] - radii[1:])))


def _level_weights(levels: int, alpha: float) -> np.ndarray:
    return 2.0 ** (np.arange(levels) / alpha)


def _prefix_sequence(space: FiniteMetricSpace, order: np.ndarray, levels: int) -> Tuple[List[np.ndarray], np.ndarray]:
    n = space.n
    sizes = [min(level_capacity(k), n) for k in range(levels)]
    running = np.minimum.accumulate(space.dist[:, order], axis=1)
    profile = np.stack([running[:, size - 1] for size in sizes], axis=1)
    return [order[:size] for size in sizes], profile


def _sequence_profile(dist: np.ndarray, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    return np.stack([dist[:, list(s)].min(axis=1) for s in subsets], axis=1)


def _exhaustive_sequence(space: FiniteMetricSpace, levels: int, weights: np.ndarray) -> Tuple[float, List[List[int]]]:
    n = space.n
    dist = space.dist
    sizes = [min(level_capacity(k), n) for k in range(levels)]
    best_value = math.inf
    best: List[List[int]] = []

    def extend(chain: List[List[int]]) -> None:
        nonlocal best_value, best
        k = len(chain)
        if k == levels:
            value = float((_sequence_profile(dist, chain) @ weights).max())
            if value < best_value:
                best_value, best = value, [list(s) for s in chain]
            return
        previous = chain[-1] if chain else []
        rest = [i for i in range(n) if i not in previous]
        for extra in itertools.combinations(rest, sizes[k] - len(previous)):
            extend(chain + [sorted(previous + list(extra))])

    extend([])
    return best_value, best


def gamma_upper(space: FiniteMetricSpace, alpha: float = 2.0, exhaustive: bool = True) -> ChainingEstimate:
    """
    Upper estimate of gamma_alpha(T, d) = inf sup_t sum_k 2**(k/alpha) d(t, T_k).

    Uses the nested farthest-point prefixes; for n <= 8 the exhaustive
    minimum over nested admissible sequences is returned instead.

    Args:
        space (FiniteMetricSpace): Non-empty finite space.
        alpha (float): Functional order, >= 1.
        exhaustive (bool): Allow the exact search on small spaces.

    Returns:
        ChainingEstimate: Estimate, sequence, entropy radii and Dudley integral.
    """
    if alpha < 1:
        raise ArgumentError(f"alpha must be >= 1, got {alpha}")
    levels = level_count(space.n) + 1
    weights = _level_weights(levels, alpha)
    subsets, profile = _prefix_sequence(space, greedy_order(space).order, levels)
    value = float((profile @ weights).max())
    exact = False

    if exhaustive and space.n <= EXACT_GAMMA_LIMIT:
        exact_value, exact_subsets = _exhaustive_sequence(space, levels, weights)
        if exact_value > value + 1e-12:
            raise InvariantError("exhaustive search missed the greedy sequence")
        value, exact = exact_value, True
        subsets = [np.asarray(s, dtype=np.int64) for s in exact_subsets]
        profile = _sequence_profile(space.dist, exact_subsets)

    logger.debug("gamma_%g upper=%.6g n=%d levels=%d exact=%s", alpha, value, space.n, levels, exact)
    return ChainingEstimate(
        gamma_upper=value,
        sequence=AdmissibleSequence.from_subsets(subsets),
        ek_radii=entropy_radii(space, levels - 1),
        dudley=dudley_integral(space),
        alpha=alpha,
        exhaustive=exact,
        space=space,
        profile=profile,
    )


def _pad_levels(estimate: ChainingEstimate, levels: int) -> Tuple[List[np.ndarray], np.ndarray]:
    subsets = list(estimate.sequence.subsets)
    profile = np.asarray(estimate.profile)
    while len(subsets) < levels:
        subsets.append(subsets[-1])
        profile = np.concatenate([profile, profile[:, -1:]], axis=1)
    return subsets, profile


def product_admissible_sequence(a: ChainingEstimate, b: ChainingEstimate) -> ChainingEstimate:
    """
    Admissible sequence on X x Y (L1 product metric) built from factor sequences.

    T~_0 = X_0 x Y_0 and T~_k = X_(k-1) x Y_(k-1) for k >= 1. Product points
    are indexed as i_x * |Y| + i_y.

    Raises:
        InvariantError: If the product sequence is not admissible or breaks the
            (1 + 2**(1/alpha)) bound (construction bug).
    """
    if a.profile is None or b.profile is None:
        raise ArgumentError("both factors need per-point profiles (use gamma_upper results)")
    if a.alpha != b.alpha:
        raise ArgumentError(f"factor orders differ: {a.alpha} vs {b.alpha}")
    alpha = a.alpha
    levels = max(len(a.sequence), len(b.sequence)) + 1
    x_sets, x_prof = _pad_levels(a, levels - 1)
    y_sets, y_prof = _pad_levels(b, levels - 1)
    n_y = y_prof.shape[0]

    source = [0] + list(range(levels - 1))
    product_sets = []
    for k, j in enumerate(source):
        subset = np.add.outer(x_sets[j] * n_y, y_sets[j]).ravel()
        if subset.size > level_capacity(k):
            raise InvariantError(f"|T~_{k}| = {subset.size} exceeds {level_capacity(k)}")
        product_sets.append(subset)
    sequence = AdmissibleSequence.from_subsets(product_sets)

    weights = _level_weights(levels, alpha)
    x_terms = x_prof[:, source]
    y_terms = y_prof[:, source]
    value = float((x_terms @ weights).max() + (y_terms @ weights).max())
    bound = (1.0 + 2.0 ** (1.0 / alpha)) * (a.gamma_upper + b.gamma_upper)
    if value > bound + PRODUCT_TOL:
        raise InvariantError(f"product estimate {value} exceeds bound {bound}")

    radii = (x_terms.max(axis=0) + y_terms.max(axis=0)).tolist()
    profile = (x_terms[:, None, :] + y_terms[None, :, :]).reshape(-1, levels)
    return ChainingEstimate(gamma_upper=value, sequence=sequence, ek_radii=radii, alpha=alpha, profile=profile)


def theorem_bound(N: int, T: int, K: float, gammaB: float, C: float = 1.0, alpha: float = 2.0) -> float:
    """C * K * (max(N, T)**(1/alpha) + gamma_alpha(B))."""
    if N < 1 or T < 1 or K <= 0 or C <= 0 or gammaB < 0 or alpha < 1:
        raise ArgumentError("theorem_bound needs N, T >= 1, K, C > 0, gammaB >= 0, alpha >= 1")
    return C * K * (max(N, T) ** (1.0 / alpha) + gammaB)


def tail_bound_value(N: int, T: int, gammaB: float, diamB: float, K: float, C: float, u: float) -> TailBound:
    """
    Threshold C*K*(sqrt(max(N,T)) + gamma_2(B) + (2 + diam(B)) * u) and the
    probability 1 - 2 exp(-u**2) (floored at 0) with which the sup stays below it.
    """
    if min(gammaB, diamB, u) < 0 or K <= 0 or C <= 0:
        raise ArgumentError("tail_bound_value needs non-negative inputs and K, C > 0")
    threshold = C * K * (math.sqrt(max(N, T)) + gammaB + (2.0 + diamB) * u)
    return TailBound(threshold=threshold, probability_floor=max(0.0, 1.0 - 2.0 * math.exp(-u * u)))


def grid_space(grid: ParamGrid) -> FiniteMetricSpace:
    """The grid as a finite metric space."""
    return FiniteMetricSpace.from_distance_matrix(grid.distance_matrix(), labels=grid.labels)


def calibrate_C(
    fam_generator: Callable[[ParamGrid, int], ParamMatrixFamily],
    grid: ParamGrid,
    reps: int,
    seed: int,
    workers: int = 1,
) -> CalibrationResult:
    """
    Empirical constant C-hat = mean_r sup_b ||X(b)|| / (K-hat (sqrt(max(N,T)) + gamma_2-hat(B))).

    Args:
        fam_generator (Callable): (grid, seed) -> family.
        grid (ParamGrid): Parameter grid.
        reps (int): Replications, at least 20.
        seed (int): Base seed; replication r uses split_seed(seed, r).
        workers (int): Thread count.

    Returns:
        CalibrationResult: C-hat with its across-replication s.d.

    Raises:
        ConfigError: If the denominator vanishes.
    """
    if reps < MIN_CALIBRATION_REPS:
        raise ArgumentError(f"reps must be at least {MIN_CALIBRATION_REPS}, got {reps}")
    gamma = gamma_upper(grid_space(grid), 2.0).gamma_upper

    def one(rep: int) -> Tuple[float, float]:
        rep_seed = split_seed(seed, rep)
        family = fam_generator(grid, rep_seed)
        k_hat = family_orlicz_constant(family, seed=rep_seed)
        denominator = k_hat * (math.sqrt(max(family.dims)) + gamma)
        if not denominator > 0:
            raise ConfigError("degenerate calibration denominator (zero family?)", field="family")
        return sup_operator_norm(family).value / denominator, k_hat

    results = ordered_map(one, range(reps), workers)
    ratios = [r for r, _ in results]
    c_hat = float(np.mean(ratios))
    sd = float(np.std(ratios, ddof=1))
    k_mean = float(np.mean([k for _, k in results]))
    logger.info("Calibrated C-hat=%.4f (sd %.4f, K-hat %.4f, gamma %.4f) over %d reps", c_hat, sd, k_mean, gamma, reps)
    return CalibrationResult(c_hat=c_hat, sd=sd, ratios=ratios, k_hat=k_mean, gamma=gamma, diameter=grid.diameter)


def sample_sphere(n: int, d: int, seed: int) -> FiniteMetricSpace:
    """n points drawn uniformly on the unit sphere S^(d-1), Euclidean metric."""
    if n < 1 or d < 1:
        raise ArgumentError("sample_sphere needs n, d >= 1")
    gen = keyed_generator(seed, STREAM_SAMPLING, d)
    points = gen.standard_normal((n, d))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return FiniteMetricSpace.from_points(points, sampled=True)


def space_from_csv(points: Optional[str] = None, distances: Optional[str] = None) -> FiniteMetricSpace:
    """
    Load a space from a point-cloud CSV (Euclidean) or a distance-matrix CSV.
    """
    if (points is None) == (distances is None):
        raise ConfigError("give exactly one of points or distances", field="points")
    if points is not None:
        return FiniteMetricSpace.from_csv_points(points)
    return FiniteMetricSpace.from_csv_distances(distances)
