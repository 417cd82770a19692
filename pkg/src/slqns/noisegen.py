"""Synthesis of stationary Gaussian noise and the two-qubit toy bath.

A zero-mean stationary Gaussian trajectory with a prescribed generating
spectrum ``S~(omega)`` is built as a finite cosine/sine sum over a uniform
frequency grid ``omega_j = j * d_omega``::

    beta(t) = sum_j G_j [A_j cos(omega_j t) + B_j sin(omega_j t)],
    G_j = sqrt(d_omega * S~(omega_j) / pi),

with ``A_j, B_j`` i.i.d. standard normal.  The exact ensemble
autocorrelation is ``<beta(t) beta(s)> = sum_j G_j^2 cos(omega_j (t-s))``.

Feeding one trajectory into a single bath qubit with a time lag between two
coupling axes produces a non-commuting (quantum) dephasing environment whose
classical/quantum spectra follow ``S~`` in closed form.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .seeding import spawn_rng
from .spectra import SpectrumModel, SphericalSpectraSet, Lorentzian, evaluate_spectrum

__all__ = [
    "DSAConfig",
    "NoiseTrajectory",
    "DSARealization",
    "BathConfig",
    "BathCoefficients",
    "BathVariant",
    "dsa_sample",
    "theoretical_autocorrelation",
    "build_toy_bath",
    "target_spectra",
    "default_dsa_config",
]

CUTOFF_ADEQUACY_RATIO = 1e-3


@dataclass(frozen=True)
class DSAConfig:
    """Frequency-grid discretization for Gaussian noise synthesis."""

    spectrum: SpectrumModel
    omega_max: float       # cutoff angular frequency, rad/us
    n_omega: int = 512     # number of frequency bins

    def __post_init__(self):
        if not (np.isfinite(self.omega_max) and self.omega_max > 0.0):
            raise ValueError(f"omega_max must be finite and > 0, got {self.omega_max}")
        if self.n_omega < 2:
            raise ValueError(f"n_omega must be >= 2, got {self.n_omega}")
        if not self.cutoff_adequate():
            warnings.warn(
                "generating spectrum has not decayed to 1e-3 of its peak at the "
                "cutoff omega_max; synthesized noise will miss spectral weight",
                UserWarning,
                stacklevel=2,
            )

    @property
    def d_omega(self) -> float:
        return self.omega_max / self.n_omega

    @property
    def frequencies(self) -> np.ndarray:
        """Grid omega_j = j * d_omega, j = 0 .. n_omega - 1."""
        return self.d_omega * np.arange(self.n_omega)

    @property
    def amplitudes(self) -> np.ndarray:
        """Mode amplitudes G_j."""
        values = np.asarray(evaluate_spectrum(self.spectrum, self.frequencies), dtype=float)
        return np.sqrt(self.d_omega * values / np.pi)

    def cutoff_adequate(self) -> bool:
        """True when the spectrum at the cutoff is <= 1e-3 of its grid maximum."""
        values = np.asarray(evaluate_spectrum(self.spectrum, self.frequencies), dtype=float)
        peak = float(values.max(initial=0.0))
        if peak == 0.0:
            return True
        tail = float(evaluate_spectrum(self.spectrum, self.omega_max))
        return tail <= CUTOFF_ADEQUACY_RATIO * peak

    @property
    def correlation_time(self) -> float:
        """Shortest timescale a simulator step must resolve (1/omega_max)."""
        tc = getattr(self.spectrum, "tc", None)
        fastest = 1.0 / self.omega_max
        return min(tc, fastest) if tc is not None else fastest


def default_dsa_config(spectrum: SpectrumModel, n_omega: int = 512) -> DSAConfig:
    """Config with a cutoff capturing essentially all spectral weight.

    For a Lorentzian the cutoff ``omega0 + 10/tc`` keeps >= 99.9 % of the
    weight; other models fall back to a generic decade above their support.
    """
    if isinstance(spectrum, Lorentzian):
        # 32 widths beyond the peak keeps the tail below 1e-3 of the maximum
        omega_max = spectrum.omega0 + 32.0 / spectrum.tc
    elif hasattr(spectrum, "grid"):
        omega_max = float(spectrum.grid[-1])
    else:
        raise ValueError(
            "no natural cutoff for this spectrum model; construct DSAConfig explicitly"
        )
    return DSAConfig(spectrum=spectrum, omega_max=omega_max, n_omega=n_omega)


@dataclass(frozen=True)
class NoiseTrajectory:
    """One sampled realization beta(t_i) with its construction metadata."""

    times: np.ndarray
    samples: np.ndarray
    seed: int
    config: DSAConfig

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if times.ndim != 1 or times.shape != samples.shape:
            raise ValueError("times/samples must be 1-D arrays of equal length")
        if times.size == 0:
            raise ValueError("time grid must be non-empty")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation between grid points; error outside coverage."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError(
                f"requested times outside trajectory coverage "
                f"[{self.times[0]}, {self.times[-1]}]"
            )
        return np.interp(t, self.times, self.samples)


class DSARealization:
    """Frozen draw of the white-noise coefficients for one trajectory.

    The trajectory is an analytic function of time, so it can be evaluated on
    any grid; :func:`dsa_sample` is the grid-sampled view.
    """

    def __init__(self, config: DSAConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        rng = spawn_rng(self.seed)
        n = config.n_omega
        self._a = rng.standard_normal(n)
        self._b = rng.standard_normal(n)
        self._ga = config.amplitudes * self._a
        self._gb = config.amplitudes * self._b

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phase = np.outer(t, self.config.frequencies)
        out = np.cos(phase) @ self._ga + np.sin(phase) @ self._gb
        return out

    def trajectory(self, time_grid) -> NoiseTrajectory:
        time_grid = np.asarray(time_grid, dtype=float)
        if time_grid.size == 0:
            raise ValueError("time grid must be non-empty")
        return NoiseTrajectory(
            times=time_grid,
            samples=self.evaluate(time_grid),
            seed=self.seed,
            config=self.config,
        )


def dsa_sample(config: DSAConfig, time_grid, seed: int) -> NoiseTrajectory:
    """Deterministically sample one noise trajectory on ``time_grid``."""
    return DSARealization(config, seed).trajectory(time_grid)


def theoretical_autocorrelation(config: DSAConfig, tau) -> np.ndarray:
    """Exact ensemble autocorrelation ``sum_j G_j^2 cos(omega_j tau)``."""
    tau = np.asarray(tau, dtype=float)
    g2 = config.amplitudes**2
    out = np.cos(np.multiply.outer(tau, config.frequencies)) @ g2
    return float(out) if out.ndim == 0 else out


class BathVariant(enum.Enum):
    """Coupling-axis assignment for the toy bath."""

    MAIN_TEXT = "main_text"    # b_x = beta(t), b_y = beta(t + gamma), b_z = 0
    THREE_AXIS = "three_axis"  # b_x = b_z = beta(t), b_y = beta(t + gamma)


@dataclass(frozen=True)
class BathConfig:
    """Single-bath-qubit coupling layout; the bath starts in its z+ state."""

    lag_gamma: float = 0.0
    couple_x: bool = True
    couple_y: bool = True
    couple_z: bool = False

    def __post_init__(self):
        if self.lag_gamma < 0.0 or not np.isfinite(self.lag_gamma):
            raise ValueError(f"lag_gamma must be finite and >= 0, got {self.lag_gamma}")
        if not (self.couple_x or self.couple_y or self.couple_z):
            raise ValueError("at least one bath coupling must be enabled")

    @classmethod
    def main_text(cls, lag_gamma: float) -> "BathConfig":
        return cls(lag_gamma=lag_gamma, couple_x=True, couple_y=True, couple_z=False)

    @classmethod
    def three_axis(cls, lag_gamma: float) -> "BathConfig":
        return cls(lag_gamma=lag_gamma, couple_x=True, couple_y=True, couple_z=True)

    @property
    def variant(self) -> BathVariant:
        if self.couple_x and self.couple_y and not self.couple_z:
            return BathVariant.MAIN_TEXT
        if self.couple_x and self.couple_y and self.couple_z:
            return BathVariant.THREE_AXIS
        raise ValueError("coupling layout matches no named variant")


@dataclass(frozen=True)
class BathCoefficients:
    """Time-indexed bath coefficient triple built from one trajectory.

    Valid for ``t`` in ``[t0, t_end - gamma]`` so the lagged access stays on
    the trajectory grid.
    """

    trajectory: NoiseTrajectory
    config: BathConfig
    t_min: float = field(init=False)
    t_max: float = field(init=False)

    def __post_init__(self):
        t0, t_end = self.trajectory.times[0], self.trajectory.times[-1]
        t_max = t_end - self.config.lag_gamma
        if t_max < t0:
            raise ValueError(
                f"lag {self.config.lag_gamma} us exceeds trajectory coverage "
                f"({t_end - t0} us)"
            )
        object.__setattr__(self, "t_min", float(t0))
        object.__setattr__(self, "t_max", float(t_max))

    def __call__(self, t):
        """Coefficients (b_x, b_y, b_z) at times ``t``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min - 1e-12) or np.any(t > self.t_max + 1e-12):
            raise ValueError(
                f"bath coefficients requested outside [{self.t_min}, {self.t_max}]"
            )
        beta_t = self.trajectory(t)
        beta_lag = self.trajectory(t + self.config.lag_gamma) if self.config.lag_gamma else beta_t
        zeros = np.zeros_like(beta_t)
        bx = beta_t if self.config.couple_x else zeros
        by = beta_lag if self.config.couple_y else zeros
        bz = beta_t if self.config.couple_z else zeros
        return bx, by, bz


def build_toy_bath(beta: NoiseTrajectory, bath: BathConfig) -> BathCoefficients:
    """Assemble the single-qubit toy-bath coefficients from a trajectory."""
    return BathCoefficients(trajectory=beta, config=bath)


def target_spectra(config: DSAConfig, gamma: float, variant: BathVariant) -> SphericalSpectraSet:
    """Dephasing spherical spectra generated by the toy bath.

    Both variants give the quantum part ``S-(w) = S~(|w|) sin(gamma w)``;
    the classical part is ``S~(|w|)`` for the two-axis layout and
    ``1.5 S~(|w|)`` when the z coupling is added.  The generating spectrum
    is read at ``|w|`` because the synthesis only consumes its ``w >= 0``
    branch and treats it as even.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    scale = {BathVariant.MAIN_TEXT: 1.0, BathVariant.THREE_AXIS: 1.5}[variant]
    spectrum = config.spectrum

    def s_plus(omega):
        return scale * evaluate_spectrum(spectrum, abs(omega))

    def s_minus(omega):
        return evaluate_spectrum(spectrum, abs(omega)) * np.sin(gamma * omega)

    if gamma == 0.0:
        return SphericalSpectraSet.from_dephasing_plus_minus(s_plus)
    return SphericalSpectraSet.from_dephasing_plus_minus(s_plus, s_minus)
