"""
Gradient descent and accelerated gradient descent for unconstrained QPs

    minimize f(x) = 1/2 x^T Q x + p^T x,   Q symmetric positive definite

Step sizes carry a negative sign (x+ = x + eta * grad) so the encrypted loop is
made of additions and multiplications only.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from utils.ckks import (
    Ciphertext,
    CkksParams,
    KeySet,
    SecretKey,
    add,
    get_encoder,
    mod_switch_to,
    mul_plain,
    rescale,
    rescale_prime,
    sub,
)
from utils.enclin import (
    MATMUL_COSTS,
    EncodedMatrix,
    EncodedVector,
    Keys,
    MatmulMethod,
    decode_vector,
    encode_matrix,
    encode_vector_replicated,
    mmult,
)
from utils.errors import ContractViolation, DepthExhausted

log = logging.getLogger('hegd.solver')


class Algorithm(str, enum.Enum):
    GD = "gd"
    AGD = "agd"


class Backend(str, enum.Enum):
    PLAIN_EXACT = "plain"
    PLAIN_SIMULATED_DEPTH = "sim"
    CKKS = "ckks"


@dataclass(frozen=True, eq=False)
class QpInstance:
    Q: np.ndarray
    p: np.ndarray
    lambda_min: float
    lambda_max: float
    x_star: np.ndarray
    x0: np.ndarray
    instance_id: str = ""

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min

    @property
    def R(self) -> float:
        return float(np.linalg.norm(self.x0 - self.x_star))

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.Q @ x + self.p @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.p

    def tolerance(self, x: np.ndarray) -> float:
        """f(x) - f(x*), computed as 1/2 (x - x*)^T Q (x - x*) since Qx* + p = 0"""
        delta = np.asarray(x, dtype=np.float64) - self.x_star
        return float(0.5 * delta @ self.Q @ delta)

    def validate(self) -> None:
        """Check symmetry, optimality of x* and the eigenvalue bounds

        Raises:
            ContractViolation: listing every failed check
        """
        from utils.probgen import sym_eig

        errors = []
        if not np.array_equal(self.Q, self.Q.T):
            errors.append("Q is not exactly symmetric")
        if not 0 < self.lambda_min <= self.lambda_max:
            errors.append(f"Need 0 < lambda_min <= lambda_max, got {self.lambda_min}, {self.lambda_max}")
        residual = np.max(np.abs(self.Q @ self.x_star + self.p), initial=0.0)
        if residual > 1e-10:
            errors.append(f"Q x* + p = {residual:.3e}, expected 0")
        if not errors:
            eigenvalues, _ = sym_eig(self.Q)
            if eigenvalues[0] < self.lambda_min - 1e-8 or eigenvalues[-1] > self.lambda_max + 1e-8:
                errors.append(
                    f"Eigenvalues [{eigenvalues[0]:.6g}, {eigenvalues[-1]:.6g}] fall outside "
                    f"[{self.lambda_min}, {self.lambda_max}]"
                )
        if errors:
            raise ContractViolation("QP instance validation failed:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class QpMetadata:
    """What the evaluating party learns in the clear"""
    d: int
    lambda_min: float
    lambda_max: float

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min

    @classmethod
    def of(cls, inst: QpInstance) -> QpMetadata:
        return cls(inst.d, inst.lambda_min, inst.lambda_max)


@dataclass
class Trace:
    algorithm: Algorithm
    backend: Backend
    iterates: list[np.ndarray] = field(default_factory=list)
    tolerances: list[float] = field(default_factory=list)
    levels: list[int | None] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)

    def record(self, x: np.ndarray, tolerance: float | None, level: int | None, seconds: float,
               t: int | None = None) -> None:
        self.steps.append(len(self.iterates) if t is None else t)
        self.iterates.append(np.array(x, dtype=np.float64))
        if tolerance is not None:
            self.tolerances.append(tolerance)
        self.levels.append(level)
        self.wall_clock.append(seconds)

    @property
    def iterations(self) -> int:
        return self.steps[-1] if self.steps else 0

    @property
    def final_tolerance(self) -> float | None:
        return self.tolerances[-1] if self.tolerances else None

    def distances(self, x_star: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(x - x_star) for x in self.iterates])

    def endpoints(self) -> Trace:
        """Copy holding only the start and the final iterate"""
        kept = Trace(self.algorithm, self.backend)
        for i in sorted({0, len(self.iterates) - 1}):
            tolerance = self.tolerances[i] if i < len(self.tolerances) else None
            kept.record(self.iterates[i], tolerance, self.levels[i], self.wall_clock[i], t=self.steps[i])
        return kept

    def to_json(self, instance_id: str = "") -> dict[str, Any]:
        per_iteration = []
        for i, x in enumerate(self.iterates):
            per_iteration.append({
                "t": self.steps[i],
                "x": x.tolist(),
                "tolerance": self.tolerances[i] if i < len(self.tolerances) else None,
                "level": self.levels[i],
                "wall_clock": self.wall_clock[i],
            })
        return {
            "instance_id": instance_id,
            "algorithm": self.algorithm.value,
            "backend": self.backend.value,
            "iterations": self.iterations,
            "final_tolerance": self.final_tolerance,
            "per_iteration": per_iteration,
        }


# ---------------------------------------------------------------------------
# Step-size theory and depth budgeting
# ---------------------------------------------------------------------------

def gd_step_size(lambda_min: float, lambda_max: float) -> float:
    """Signed GD step -2 / (lambda_min + lambda_max)"""
    if not 0 < lambda_min <= lambda_max:
        raise ContractViolation(
            f"Eigenvalue bounds must satisfy 0 < lambda_min <= lambda_max, got {lambda_min}, {lambda_max}"
        )
    return -2.0 / (lambda_min + lambda_max)


def agd_step_size(lambda_max: float) -> float:
    """Signed AGD step -1 / lambda_max"""
    if not lambda_max > 0:
        raise ContractViolation(f"lambda_max must be positive, got {lambda_max}")
    return -1.0 / lambda_max


def momentum(kappa: float) -> float:
    root = math.sqrt(kappa)
    return (root - 1.0) / (root + 1.0)


def iteration_radius(Q: np.ndarray, eta: float) -> float:
    """Spectral radius of I - eta*Q for a positive step magnitude eta"""
    from utils.probgen import sym_eig

    eigenvalues, _ = sym_eig(Q)
    return float(np.max(np.abs(1.0 - eta * eigenvalues)))


def convergence_bound(algorithm: Algorithm, kappa: float, R: float, t: int) -> float:
    """Tolerance guaranteed after t steps: R^2 exp(-t/kappa) or R^2 exp(-t/sqrt(kappa))"""
    rate = kappa if Algorithm(algorithm) is Algorithm.GD else math.sqrt(kappa)
    return R * R * math.exp(-t / rate)


def iterations_needed(algorithm: Algorithm, kappa: float, R: float, eps: float) -> float:
    """Steps to reach tolerance eps: kappa log(R^2/eps) or sqrt(kappa) log(R^2/eps)"""
    if not eps > 0:
        raise ContractViolation(f"Target tolerance must be positive, got {eps}")
    rate = kappa if Algorithm(algorithm) is Algorithm.GD else math.sqrt(kappa)
    return rate * math.log(R * R / eps)


def per_iteration_cost(algorithm: Algorithm, matmul: MatmulMethod = MatmulMethod.TWO_LEVEL) -> int:
    """Levels one iteration consumes: the product plus one momentum level for AGD"""
    extra = 1 if Algorithm(algorithm) is Algorithm.AGD else 0
    return MATMUL_COSTS[MatmulMethod(matmul)].depth + extra


def depth_cost(algorithm: Algorithm, N: int, matmul: MatmulMethod = MatmulMethod.TWO_LEVEL) -> int:
    if N < 0:
        raise ContractViolation(f"Iteration count must be non-negative, got {N}")
    return per_iteration_cost(algorithm, matmul) * N


def max_iterations(algorithm: Algorithm, budget: int, matmul: MatmulMethod = MatmulMethod.TWO_LEVEL) -> int:
    if budget < 0:
        raise ContractViolation(f"Depth budget must be non-negative, got {budget}")
    return budget // per_iteration_cost(algorithm, matmul)


@dataclass(frozen=True)
class SolverConfig:
    iterations: int
    backend: Backend = Backend.PLAIN_EXACT
    depth_budget: int = 18
    record_trajectory: bool = True
    matmul: MatmulMethod = MatmulMethod.TWO_LEVEL

    def check_budget(self, algorithm: Algorithm) -> None:
        """Raises DepthExhausted when a depth-tracking backend cannot fit the run"""
        if self.backend is Backend.PLAIN_EXACT:
            return
        cost = depth_cost(algorithm, self.iterations, self.matmul)
        if cost > self.depth_budget:
            raise DepthExhausted(
                f"{Algorithm(algorithm).value.upper()} with {self.iterations} iterations needs {cost} levels; "
                f"budget is {self.depth_budget} (max {max_iterations(algorithm, self.depth_budget, self.matmul)} iterations)"
            )


# ---------------------------------------------------------------------------
# Plaintext references
# ---------------------------------------------------------------------------

def gd_plain(inst: QpInstance, N: int, eta: float | None = None) -> Trace:
    """Exact GD trajectory; ``eta`` is the signed step (default -2/(lmin+lmax))"""
    eta = gd_step_size(inst.lambda_min, inst.lambda_max) if eta is None else eta
    trace = Trace(Algorithm.GD, Backend.PLAIN_EXACT)
    x = np.array(inst.x0, dtype=np.float64)
    trace.record(x, inst.tolerance(x), None, 0.0)
    for _ in range(N):
        start = time.perf_counter()
        x = x + eta * inst.gradient(x)
        trace.record(x, inst.tolerance(x), None, time.perf_counter() - start)
    return trace


def agd_plain(inst: QpInstance, N: int) -> Trace:
    """Exact AGD trajectory with step -1/lmax and momentum (sqrt(k)-1)/(sqrt(k)+1)"""
    eta = agd_step_size(inst.lambda_max)
    theta = momentum(inst.kappa)
    trace = Trace(Algorithm.AGD, Backend.PLAIN_EXACT)
    x = np.array(inst.x0, dtype=np.float64)
    y_prev = x.copy()
    trace.record(x, inst.tolerance(x), None, 0.0)
    for _ in range(N):
        start = time.perf_counter()
        y = x + eta * inst.gradient(x)
        x = (1.0 + theta) * y - theta * y_prev
        y_prev = y
        trace.record(x, inst.tolerance(x), None, time.perf_counter() - start)
    return trace


def closed_form(inst: QpInstance) -> np.ndarray:
    """Solve Qx = -p through a Cholesky factorization

    Raises:
        ContractViolation: Q is singular or indefinite
    """
    try:
        lower = np.linalg.cholesky(inst.Q)
    except np.linalg.LinAlgError as e:
        raise ContractViolation(f"Q is not positive definite: {e}") from e
    y = np.linalg.solve(lower, -inst.p)
    return np.linalg.solve(lower.T, y)


def simulate_depth(inst: QpInstance, algorithm: Algorithm, N: int, depth_budget: int,
                   matmul: MatmulMethod = MatmulMethod.TWO_LEVEL) -> Trace:
    """Exact trajectory annotated with the levels an encrypted run would have left"""
    algorithm = Algorithm(algorithm)
    SolverConfig(N, Backend.PLAIN_SIMULATED_DEPTH, depth_budget, matmul=matmul).check_budget(algorithm)
    trace = gd_plain(inst, N) if algorithm is Algorithm.GD else agd_plain(inst, N)
    cost = per_iteration_cost(algorithm, matmul)
    trace.backend = Backend.PLAIN_SIMULATED_DEPTH
    trace.levels = [depth_budget - cost * t for t in range(N + 1)]
    return trace


# ---------------------------------------------------------------------------
# Encrypted solvers
# ---------------------------------------------------------------------------

def _times_constant(ct: Ciphertext, value: float, params: CkksParams) -> Ciphertext:
    """ct scaled by a public constant, one level down, scale unchanged"""
    pt = get_encoder(params).encode(
        np.full(params.slots, value), scale=float(rescale_prime(ct)), level=ct.level
    )
    return rescale(mul_plain(ct, pt))


def _prepare(algorithm: Algorithm, encQ: EncodedMatrix, encP: EncodedVector, meta: QpMetadata,
             x0: EncodedVector | None, N: int, keys: Keys, rng: np.random.Generator | None) -> EncodedVector:
    if encQ.d != meta.d or encP.d != meta.d:
        raise ContractViolation(f"Encoded operands have d={encQ.d}, {encP.d}; metadata says d={meta.d}")
    if x0 is None:
        if rng is None:
            raise ContractViolation("An rng is required to encrypt the default zero starting point")
        x0 = encode_vector_replicated(np.zeros(meta.d), keys, rng)
    available = min(encQ.level, x0.level)
    needed = depth_cost(algorithm, N)
    if needed > available:
        raise DepthExhausted(
            f"{algorithm.value.upper()} with {N} iterations needs {needed} levels; only {available} available "
            f"(max {max_iterations(algorithm, available)} iterations)"
        )
    if N > 0 and encP.level < 1:
        raise DepthExhausted("The linear term needs one level for the step-size product")
    return x0


class _Recorder:
    """Decrypts iterates for a trace when the caller holds the secret key"""

    def __init__(self, algorithm: Algorithm, secret_key: SecretKey | None, reference=None):
        self.secret_key = secret_key
        self.reference = reference
        self.trace = Trace(algorithm, Backend.CKKS) if secret_key is not None else None

    def __call__(self, x: EncodedVector, seconds: float) -> None:
        if self.trace is None:
            return
        value = decode_vector(x, self.secret_key)
        tolerance = self.reference.tolerance(value) if self.reference is not None else None
        self.trace.record(value, tolerance, x.level, seconds)


def he_gd(encQ: EncodedMatrix, encP: EncodedVector, meta: QpMetadata, x0: EncodedVector | None,
          N: int, keys: Keys, rng: np.random.Generator | None = None,
          secret_key: SecretKey | None = None, reference: QpInstance | None = None):
    """Encrypted GD: x+ = x + MMult(Q, x, eta) + eta*p, two levels per iteration

    Args:
        encQ: Q row-major
        encP: p column-replicated
        meta: plaintext dimension and eigenvalue bounds
        x0: starting point; the encryption of zero when None
        N: iteration count
        keys: public, relinearization and Galois keys
        rng: randomness for encrypting the default starting point
        secret_key: when given, iterates are decrypted into a Trace
        reference: plaintext instance for trace tolerances

    Returns:
        (final iterate, Trace or None)

    Raises:
        DepthExhausted: N iterations do not fit the available levels
    """
    x = _prepare(Algorithm.GD, encQ, encP, meta, x0, N, keys, rng)
    params = keys.params
    eta = gd_step_size(meta.lambda_min, meta.lambda_max)
    recorder = _Recorder(Algorithm.GD, secret_key, reference)
    recorder(x, 0.0)
    eta_p = _times_constant(encP.ct, eta, params) if N > 0 else None

    log.info(f"HE GD: d={meta.d}, N={N}, eta={eta:.6g}, starting level {x.level}")
    for t in range(N):
        start = time.perf_counter()
        step = mmult(encQ, x, meta.d, eta, keys)
        level = step.level
        x_plus = add(mod_switch_to(eta_p, level), add(mod_switch_to(x.ct, level), step.ct))
        x = EncodedVector(x_plus, meta.d)
        recorder(x, time.perf_counter() - start)
        log.debug(f"HE GD iteration {t + 1}/{N} done at level {x.level}")
    return x, recorder.trace


def he_agd(encQ: EncodedMatrix, encP: EncodedVector, meta: QpMetadata, x0: EncodedVector | None,
           N: int, keys: Keys, rng: np.random.Generator | None = None,
           secret_key: SecretKey | None = None, reference: QpInstance | None = None):
    """Encrypted AGD, three levels per iteration

    y+ = x + MMult(Q, x, eta) + eta*p, then x+ = (1 + theta)*y+ - theta*y-,
    with y- mod-switched down to y+'s level before the momentum products.
    Arguments and return value as in ``he_gd``.
    """
    x = _prepare(Algorithm.AGD, encQ, encP, meta, x0, N, keys, rng)
    params = keys.params
    eta = agd_step_size(meta.lambda_max)
    theta = momentum(meta.kappa)
    recorder = _Recorder(Algorithm.AGD, secret_key, reference)
    recorder(x, 0.0)
    eta_p = _times_constant(encP.ct, eta, params) if N > 0 else None
    y_prev = x.ct

    log.info(f"HE AGD: d={meta.d}, N={N}, eta={eta:.6g}, theta={theta:.6g}, starting level {x.level}")
    for t in range(N):
        start = time.perf_counter()
        step = mmult(encQ, x, meta.d, eta, keys)
        level = step.level
        y = add(mod_switch_to(eta_p, level), add(mod_switch_to(x.ct, level), step.ct))
        x_plus = sub(
            _times_constant(y, 1.0 + theta, params),
            _times_constant(mod_switch_to(y_prev, level), theta, params),
        )
        y_prev = y
        x = EncodedVector(x_plus, meta.d)
        recorder(x, time.perf_counter() - start)
        log.debug(f"HE AGD iteration {t + 1}/{N} done at level {x.level}")
    return x, recorder.trace


def encrypt_instance(inst: QpInstance, keys: Keys, rng: np.random.Generator,
                     start: np.ndarray | None = None) -> tuple[EncodedMatrix, EncodedVector, EncodedVector]:
    """Client-side encryption of (Q, p, x0) at the top level"""
    x_start = inst.x0 if start is None else start
    return (
        encode_matrix(inst.Q, keys, rng),
        encode_vector_replicated(inst.p, keys, rng),
        encode_vector_replicated(x_start, keys, rng),
    )


def solve(inst: QpInstance, algorithm: Algorithm, config: SolverConfig,
          keys: KeySet | None = None, rng: np.random.Generator | None = None) -> Trace:
    """Run one solve on the configured backend and return its trace

    The CKKS backend needs the full KeySet and an rng for encryption. With
    ``record_trajectory`` off the trace holds only x0 and the final iterate,
    and on CKKS the evaluator never sees the secret key: only the returned
    ciphertext is decrypted.
    """
    algorithm = Algorithm(algorithm)
    backend = Backend(config.backend)
    config.check_budget(algorithm)

    if backend is Backend.PLAIN_EXACT:
        trace = gd_plain(inst, config.iterations) if algorithm is Algorithm.GD else agd_plain(inst, config.iterations)
        return trace if config.record_trajectory else trace.endpoints()
    if backend is Backend.PLAIN_SIMULATED_DEPTH:
        trace = simulate_depth(inst, algorithm, config.iterations, config.depth_budget, config.matmul)
        return trace if config.record_trajectory else trace.endpoints()

    if keys is None or rng is None:
        raise ContractViolation("The ckks backend needs keys and an rng")
    encQ, encP, x0 = encrypt_instance(inst, keys, rng)
    runner = he_gd if algorithm is Algorithm.GD else he_agd
    if config.record_trajectory:
        _, trace = runner(encQ, encP, QpMetadata.of(inst), x0, config.iterations, keys,
                          secret_key=keys.secret, reference=inst)
        return trace

    start = time.perf_counter()
    final, _ = runner(encQ, encP, QpMetadata.of(inst), x0, config.iterations, keys.evaluation_keys())
    seconds = time.perf_counter() - start
    value = decode_vector(final, keys.secret)
    trace = Trace(algorithm, Backend.CKKS)
    trace.record(inst.x0, inst.tolerance(inst.x0), x0.level, 0.0)
    trace.record(value, inst.tolerance(value), final.level, seconds, t=config.iterations)
    return trace
