"""
Random QP instances with a prescribed condition number, and a cyclic Jacobi
eigensolver used to certify them
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from utils.errors import ContractViolation
from utils.solver import QpInstance

log = logging.getLogger('hegd.probgen')

SYMMETRY_TOLERANCE = 1e-12


class EigenProfile(str, enum.Enum):
    UNIFORM_SPREAD = "uniform-spread"
    TWO_POINT = "two-point"


@dataclass(frozen=True)
class GenSpec:
    d: int
    kappa: float
    seed: int
    eigen_profile: EigenProfile = EigenProfile.TWO_POINT

    def __post_init__(self):
        if self.d < 2:
            raise ContractViolation(f"Dimension must be at least 2, got {self.d}")
        if not self.kappa >= 1:
            raise ContractViolation(f"Condition number must be >= 1, got {self.kappa}")
        if not 0 <= self.seed < 2 ** 64:
            raise ContractViolation(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, 'eigen_profile', EigenProfile(self.eigen_profile))


def derive_seed(seed: int, d: int, kappa: float, repetition: int) -> int:
    """Independent 64-bit stream seed for one (d, kappa, repetition) work item"""
    sequence = np.random.SeedSequence([seed, d, int(round(kappa * 1000)), repetition])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix from the QR factorization of a Gaussian matrix"""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def spectrum(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    """Ascending eigenvalues with lambda_1 = 1 and lambda_d = kappa

    ``two-point`` puts the lower half of the spectrum at 1 and the rest at
    kappa; ``uniform-spread`` draws the interior uniformly from [1, kappa].
    """
    if spec.eigen_profile is EigenProfile.TWO_POINT:
        low = spec.d // 2
        return np.concatenate((np.ones(low), np.full(spec.d - low, float(spec.kappa))))
    middle = rng.uniform(1.0, spec.kappa, size=spec.d - 2)
    return np.concatenate(([1.0], np.sort(middle), [spec.kappa]))


def _draw_factors(spec: GenSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    u = random_orthogonal(spec.d, rng)
    return u, spectrum(spec, rng)


def _compose(u: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    q = (u * eigenvalues) @ u.T
    return (q + q.T) / 2.0


def random_spd(spec: GenSpec) -> np.ndarray:
    return _compose(*_draw_factors(spec, np.random.default_rng(spec.seed)))


def make_instance(spec: GenSpec, instance_id: str | None = None) -> QpInstance:
    """Instance with x* uniform in [-1, 1]^d and x0 at distance 1 from x*

    x0 - x* carries energy 1/d along every eigenvector of Q, with random
    signs, so the start never hides in a single eigenspace.
    """
    rng = np.random.default_rng(spec.seed)
    u, eigenvalues = _draw_factors(spec, rng)
    q = _compose(u, eigenvalues)
    x_star = rng.uniform(-1.0, 1.0, size=spec.d)
    signs = rng.choice([-1.0, 1.0], size=spec.d)
    direction = u @ signs / math.sqrt(spec.d)
    return QpInstance(
        Q=q,
        p=-q @ x_star,
        lambda_min=1.0,
        lambda_max=float(spec.kappa),
        x_star=x_star,
        x0=x_star + direction,
        instance_id=instance_id or f"d{spec.d}-k{spec.kappa:g}-s{spec.seed}",
    )


def demo_instance(seed: int) -> QpInstance:
    """2x2, kappa = 2 instance with x* = (1, 1) and x0 = (3, 3)"""
    q = random_spd(GenSpec(d=2, kappa=2.0, seed=seed))
    x_star = np.array([1.0, 1.0])
    return QpInstance(
        Q=q,
        p=-q @ x_star,
        lambda_min=1.0,
        lambda_max=2.0,
        x_star=x_star,
        x0=np.array([3.0, 3.0]),
        instance_id=f"demo-s{seed}",
    )


def sym_eig(M: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations

    Args:
        M: symmetric matrix
        tol: stop once the off-diagonal Frobenius norm drops below this
        max_sweeps: bound on full passes over the upper triangle

    Returns:
        (eigenvalues ascending, eigenvectors as columns)

    Raises:
        ContractViolation: M is not symmetric or the sweeps do not converge
    """
    a = np.array(M, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ContractViolation(f"Expected a square matrix, got shape {a.shape}")
    asymmetry = np.max(np.abs(a - a.T), initial=0.0)
    if asymmetry > SYMMETRY_TOLERANCE:
        raise ContractViolation(f"Matrix is not symmetric (max |M - M^T| = {asymmetry:.3e})")

    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        off = math.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off >= tol:
            raise ContractViolation(f"Jacobi sweeps did not converge (off-diagonal norm {off:.3e})")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues)
    return eigenvalues[order], v[:, order]


def certified_kappa(Q: np.ndarray) -> float:
    eigenvalues, _ = sym_eig(Q)
    if eigenvalues[0] <= 0:
        raise ContractViolation(f"Matrix is not positive definite (smallest eigenvalue {eigenvalues[0]:.3e})")
    return float(eigenvalues[-1] / eigenvalues[0])


def instance_to_json(inst: QpInstance) -> dict[str, Any]:
    return {
        "instance_id": inst.instance_id,
        "d": inst.d,
        "Q": inst.Q.ravel().tolist(),
        "p": inst.p.tolist(),
        "x0": inst.x0.tolist(),
        "x_star": inst.x_star.tolist(),
        "lambda_min": inst.lambda_min,
        "lambda_max": inst.lambda_max,
        "kappa": inst.kappa,
        "R": inst.R,
    }


def instance_from_json(data: dict[str, Any]) -> QpInstance:
    """Rebuild an instance; Q is stored row-major

    Raises:
        ContractViolation: missing fields or inconsistent sizes
    """
    required = ['d', 'Q', 'p', 'x0', 'x_star', 'lambda_min', 'lambda_max']
    missing = [k for k in required if k not in data]
    if missing:
        raise ContractViolation(
            f"Instance missing required fields: {', '.join(missing)}. "
            f"Expected format: {{'d': 2, 'Q': [row-major], 'p': [...], 'x0': [...], 'x_star': [...], "
            f"'lambda_min': 1.0, 'lambda_max': 2.0}}"
        )
    d = int(data['d'])
    q = np.array(data['Q'], dtype=np.float64)
    if q.size != d * d:
        raise ContractViolation(f"Q has {q.size} entries, expected {d * d}")
    vectors = {k: np.array(data[k], dtype=np.float64) for k in ('p', 'x0', 'x_star')}
    for name, vec in vectors.items():
        if vec.shape != (d,):
            raise ContractViolation(f"'{name}' has shape {vec.shape}, expected ({d},)")
    return QpInstance(
        Q=q.reshape(d, d),
        p=vectors['p'],
        lambda_min=float(data['lambda_min']),
        lambda_max=float(data['lambda_max']),
        x_star=vectors['x_star'],
        x0=vectors['x0'],
        instance_id=str(data.get('instance_id', '')),
    )
