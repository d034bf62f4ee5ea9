"""
Decode-then-cancel receiver chain.

The echo is first treated as colored noise: its covariance is whitened, the
whitened channel is combined with a maximal-ratio combiner, and the uplink
symbol is detected by exhaustive maximum-likelihood search. The detected
symbol is then reconstructed and subtracted from the reception, and the
reflection coefficient is estimated from the residual with a linear MMSE
(Bayesian linear model) estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Constellation, Observation, ReceiverOutput

# Relative eigenvalue floor below which a matrix is rejected as non-PD.
_PD_RTOL = 1e-14


@dataclass
class WhiteningContext:
    """Interference covariance, its inverse square root, and the combiner.

    r_c : echo-plus-noise covariance, Hermitian positive definite
    q   : whitener r_c^(-1/2) (unique Hermitian PD root)
    w   : maximal-ratio combiner q @ h_c in the whitened domain
    """

    r_c: np.ndarray
    q: np.ndarray
    w: np.ndarray

    @property
    def combined_gain(self) -> float:
        """Post-combining channel gain w^H w (real, positive)."""
        return float(np.vdot(self.w, self.w).real)


def interference_covariance(obs: Observation) -> np.ndarray:
    """Covariance of echo plus noise seen by the symbol detector.

    The probing symbol has unit average power, so the echo contributes a
    rank-one term gamma * g g^H on top of the white noise floor.
    """
    n = obs.n_rx
    return obs.gamma * np.outer(obs.g, obs.g.conj()) + obs.sigma2 * np.eye(n)


def whitening_matrix(r_c: np.ndarray) -> np.ndarray:
    """Unique Hermitian PD inverse square root of a Hermitian PD matrix."""
    r_sym = 0.5 * (r_c + r_c.conj().T)
    eigvals, eigvecs = np.linalg.eigh(r_sym)
    if eigvals[0] <= _PD_RTOL * eigvals[-1]:
        raise np.linalg.LinAlgError(
            f"matrix is not positive definite (eigenvalues {eigvals})"
        )
    return (eigvecs / np.sqrt(eigvals)) @ eigvecs.conj().T


def build_whitening_context(obs: Observation) -> WhiteningContext:
    r_c = interference_covariance(obs)
    q = whitening_matrix(r_c)
    return WhiteningContext(r_c=r_c, q=q, w=q @ obs.h_c)


def mrc_combine(obs: Observation, ctx: WhiteningContext) -> complex:
    """Scalar sufficient statistic w^H Q y of the whitened reception."""
    return complex(np.vdot(ctx.w, ctx.q @ obs.y))


def ml_detect(combined: complex, ctx: WhiteningContext, beta: float,
              constellation: Constellation) -> int:
    """Exhaustive nearest-symbol search on the combined statistic.

    Minimizes |combined - sqrt(beta) * w^H w * s_i| over the alphabet; ties
    are broken toward the lowest index so repeated runs are bit-identical.
    """
    if constellation.size == 0:
        raise ValueError("cannot detect over an empty constellation")
    gain = math.sqrt(beta) * ctx.combined_gain
    metric = np.abs(combined - gain * constellation.points) ** 2
    return int(np.argmin(metric))


def sic_subtract(obs: Observation, detected: int) -> np.ndarray:
    """Remove the reconstructed uplink signal from the reception.

    Equals the pure echo-plus-noise component whenever the detection was
    correct; a wrong decision leaves sqrt(beta) * h_c * (s - s_hat) behind.
    """
    if not 0 <= detected < obs.constellation.size:
        raise ValueError(f"detected index {detected} out of range")
    s_hat = obs.constellation.points[detected]
    return obs.y - math.sqrt(obs.beta) * obs.h_c * s_hat


def linear_mmse_alpha(residual: np.ndarray, obs: Observation) -> complex:
    """Linear MMSE estimate of the reflection coefficient from a residual.

    With k = sqrt(gamma) * g * x and a CN(0,1) prior the matrix estimator
    k^H (k k^H + sigma2 I)^(-1) collapses (rank-one inverse) to

        alpha_hat = k^H residual / (||k||^2 + sigma2).
    """
    if residual.shape != obs.g.shape:
        raise ValueError("residual length does not match the array size")
    k = math.sqrt(obs.gamma) * obs.x * obs.g
    denom = np.vdot(k, k).real + obs.sigma2
    return complex(np.vdot(k, residual) / denom)


def run_sic_chain(obs: Observation) -> ReceiverOutput:
    """Whiten, combine, detect, cancel, then estimate alpha linearly."""
    ctx = build_whitening_context(obs)
    combined = mrc_combine(obs, ctx)
    detected = ml_detect(combined, ctx, obs.beta, obs.constellation)
    residual = sic_subtract(obs, detected)
    alpha_hat = linear_mmse_alpha(residual, obs)
    return ReceiverOutput(
        detected_index=detected,
        alpha_hat=alpha_hat,
        whitened=ctx.q @ obs.y,
        combined=combined,
    )
