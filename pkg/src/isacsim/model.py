"""
Physical and statistical signal model for a monostatic MIMO base station that
decodes an uplink symbol while estimating a radar target's reflection
coefficient from the echo of its own probing signal.

Single snapshot model (all quantities complex baseband):

    y = sqrt(beta) * h_c * s  +  sqrt(gamma) * alpha * g * x  +  z

with h_c the uplink SIMO channel (i.i.d. CN(0,1) entries), s the uplink
symbol, g = b(theta) * a(theta)^H * f the composite sensing channel of a
target at angle theta (f = a(theta) when the beam is steered at the target),
alpha ~ CN(0,1) the reflection coefficient, x the known probing symbol and
z ~ CN(0, sigma2*I) receiver noise. beta and gamma are the communication and
sensing transmit powers on a linear scale.

Randomness discipline: every trial draws from its own counter-based Philox
substream so that results are reproducible independently of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_RT_HALF = math.sqrt(0.5)


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------

@dataclass
class Constellation:
    """Unit-average-power symbol alphabet with per-symbol bit labels.

    points : complex ndarray, shape (A,)
    bit_map : uint8 ndarray, shape (A, log2(A)), one row of bits per symbol
    """

    points: np.ndarray
    bit_map: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.complex128)
        self.bit_map = np.asarray(self.bit_map, dtype=np.uint8)
        a = self.points.size
        if a == 0:
            raise ValueError("constellation must contain at least one symbol")
        if a & (a - 1) != 0:
            raise ValueError(f"alphabet size must be a power of two, got {a}")
        nbits = int(round(math.log2(a)))
        if self.bit_map.shape != (a, nbits):
            raise ValueError(
                f"bit_map shape {self.bit_map.shape} does not match "
                f"({a}, {nbits})"
            )
        labels = {tuple(row) for row in self.bit_map}
        if len(labels) != a:
            raise ValueError("bit labels must be distinct")
        power = np.mean(np.abs(self.points) ** 2)
        if abs(power - 1.0) > 1e-12:
            raise ValueError(f"average symbol power must be 1, got {power!r}")

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.bit_map.shape[1]


def qpsk() -> Constellation:
    """Gray-coded QPSK: unit-modulus points at 45/135/225/315 degrees.

    Adjacent phases differ in exactly one bit, antipodal points in both.
    """
    points = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    bit_map = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
    return Constellation(points=points, bit_map=bit_map, name="qpsk")


def single_symbol() -> Constellation:
    """Degenerate one-symbol alphabet, useful for estimator reduction checks."""
    return Constellation(
        points=np.array([1.0 + 0.0j]),
        bit_map=np.zeros((1, 0), dtype=np.uint8),
        name="single",
    )


CONSTELLATIONS = {"qpsk": qpsk, "single": single_symbol}


# ---------------------------------------------------------------------------
# Configuration and per-trial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """Static simulation parameters for one operating point."""

    n_tx: int = 4
    n_rx: int = 4
    beta: float = 1.0          # communication power, linear
    gamma: float = 1.0         # sensing power, linear
    sigma2: float = 1e-3       # noise power, linear
    theta: float = np.pi / 6   # target angle, radians
    constellation: Constellation = field(default_factory=qpsk)
    seed: int = 0

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("powers must be nonnegative")
        if not -np.pi / 2 < self.theta < np.pi / 2:
            raise ValueError("theta must lie in (-pi/2, pi/2)")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass
class Scene:
    """Ground truth of a single trial."""

    alpha: complex            # reflection coefficient, CN(0,1)
    h_c: np.ndarray           # uplink channel, CN(0,1) entries, length n_rx
    symbol_index: int         # transmitted uplink symbol index
    x: complex                # probing symbol (known to the receiver)
    noise: np.ndarray         # receiver noise, CN(0,sigma2) entries


@dataclass
class Observation:
    """Received vector plus everything the receiver is allowed to know.

    The receiver knows the channel h_c, the composite sensing channel g, the
    probing symbol x, the powers and the alphabet; it does not know s, alpha
    or the noise realization.
    """

    y: np.ndarray
    g: np.ndarray
    h_c: np.ndarray
    x: complex
    beta: float
    gamma: float
    sigma2: float
    constellation: Constellation

    @property
    def n_rx(self) -> int:
        return self.y.size


@dataclass
class ReceiverOutput:
    """Joint decision of one receiver chain on one observation."""

    detected_index: int
    alpha_hat: complex
    whitened: np.ndarray | None = None
    combined: complex | None = None


# ---------------------------------------------------------------------------
# Deterministic geometry
# ---------------------------------------------------------------------------

def steering_vector(n: int, theta: float) -> np.ndarray:
    """Response of an n-element half-wavelength ULA toward angle theta.

    Element k (0-based) is exp(j*pi*k*sin(theta)); entries are unit modulus
    so the squared norm equals n.
    """
    k = np.arange(n)
    return np.exp(1j * np.pi * k * np.sin(theta))


def composite_sensing_channel(cfg: SystemConfig) -> np.ndarray:
    """Two-way array response g = b(theta) * (a(theta)^H f) with f = a(theta).

    The transmit beam is steered at the target, so a^H f = n_tx and
    ||g||^2 = n_tx^2 * n_rx.
    """
    a = steering_vector(cfg.n_tx, cfg.theta)
    b = steering_vector(cfg.n_rx, cfg.theta)
    return b * np.vdot(a, a)


# ---------------------------------------------------------------------------
# Random sampling
# ---------------------------------------------------------------------------

def philox_key(seed: int) -> np.ndarray:
    """Expand a 64-bit seed into a Philox key (2 x uint64)."""
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent substream for one trial.

    Trial t owns the Philox counter block starting at t << 128, so streams
    never overlap and trial t is reproducible regardless of which other
    trials ran before it or on which thread.
    """
    bg = np.random.Philox(key=philox_key(seed), counter=trial_index << 128)
    return np.random.Generator(bg)


def derive_cell_seed(master_seed: int, cell_index: int) -> int:
    """Per-cell seed for sweep cell `cell_index` under one master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(cell_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _draw_scene_parts(rng: np.random.Generator, n_rx: int, a_size: int,
                      sigma2: float):
    """Raw draws of one trial, in the frozen canonical order.

    Order: channel (re then im), alpha (re then im), symbol index, probing
    index, noise (re then im). Changing this order breaks reproducibility of
    stored seeds, so it is pinned by tests.
    """
    h_c = (rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)) * _RT_HALF
    alpha = complex(rng.standard_normal() + 1j * rng.standard_normal()) * _RT_HALF
    symbol_index = int(rng.integers(a_size))
    x_index = int(rng.integers(a_size))
    noise = (rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)) \
        * math.sqrt(sigma2 / 2)
    return h_c, alpha, symbol_index, x_index, noise


def sample_scene(cfg: SystemConfig, rng: np.random.Generator) -> Scene:
    """Draw one trial's ground truth from `rng`.

    alpha ~ CN(0,1); h_c has i.i.d. CN(0,1) entries; the uplink symbol index
    and the probing symbol are uniform over the alphabet; noise entries are
    i.i.d. CN(0, sigma2). Deterministic given the generator state.
    """
    a_size = cfg.constellation.size
    h_c, alpha, symbol_index, x_index, noise = _draw_scene_parts(
        rng, cfg.n_rx, a_size, cfg.sigma2
    )
    return Scene(
        alpha=alpha,
        h_c=h_c,
        symbol_index=symbol_index,
        x=complex(cfg.constellation.points[x_index]),
        noise=noise,
    )


def generate_observation(cfg: SystemConfig, scene: Scene) -> Observation:
    """Form the mixed uplink-plus-echo reception for one scene."""
    if scene.h_c.shape != (cfg.n_rx,) or scene.noise.shape != (cfg.n_rx,):
        raise ValueError(
            f"scene dimensions {scene.h_c.shape}/{scene.noise.shape} do not "
            f"match n_rx={cfg.n_rx}"
        )
    if not 0 <= scene.symbol_index < cfg.constellation.size:
        raise ValueError(f"symbol index {scene.symbol_index} out of range")
    g = composite_sensing_channel(cfg)
    s = cfg.constellation.points[scene.symbol_index]
    y = (
        math.sqrt(cfg.beta) * scene.h_c * s
        + math.sqrt(cfg.gamma) * scene.alpha * g * scene.x
        + scene.noise
    )
    return Observation(
        y=y,
        g=g,
        h_c=scene.h_c,
        x=scene.x,
        beta=cfg.beta,
        gamma=cfg.gamma,
        sigma2=cfg.sigma2,
        constellation=cfg.constellation,
    )
