"""Littlewood-Paley projections on periodic one-dimensional grids and the
d = 1 decay experiments.

Frequencies are measured in cycles per unit length: sample j of a field with
n samples and period L sits at -L/2 + (j + 1/2) L/n, and bin k of the FFT
has frequency ``numpy.fft.fftfreq(n, L/n)[k]``.  The Nyquist frequency is
n / (2L).
"""

import math
from dataclasses import dataclass

import numpy as np

from .averaging import DEFAULT_QUAD, bilinear_spherical_average
from .core import AliasingError, DomainError, InsufficientDataError, fit_power_law, in_region
from .fields import GridFunction, GridSpec, lp_norm, shift


def _e(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, e^{-1/x} gluing in between."""
    x = np.asarray(x, float)
    a, b = _e(x), _e(1.0 - x)
    return a / (a + b)


def bump_psi(xi):
    """psi = 1 on |xi| <= 1, 0 on |xi| >= 2, smooth and monotone in between."""
    xi = np.asarray(xi, float)
    out = 1.0 - smooth_step(np.abs(xi) - 1.0)
    return float(out) if out.ndim == 0 else out


def psi_k(xi, k):
    return bump_psi(np.asarray(xi, float) * 2.0 ** (-k))


def phi_k(xi, k):
    return psi_k(xi, k) - psi_k(xi, k - 1)


@dataclass(frozen=True)
class PeriodicField:
    n: int
    period: float
    values: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise DomainError("sample count must be a power of two")
        if not self.period > 0:
            raise DomainError("period must be positive")
        v = np.array(self.values)
        if v.shape != (n,):
            raise DomainError(f"expected {n} samples, got shape {v.shape}")
        if not np.iscomplexobj(v):
            v = v.astype(float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, n, period, fn):
        return cls(n, period, fn(cls.sample_points(n, period)))

    @staticmethod
    def sample_points(n, period):
        h = period / n
        return -period / 2 + (np.arange(n) + 0.5) * h

    @property
    def spacing(self):
        return self.period / self.n

    @property
    def nyquist(self):
        return self.n / (2.0 * self.period)

    def frequencies(self):
        return np.fft.fftfreq(self.n, self.spacing)

    def spectrum(self):
        return np.fft.fft(self.values)

    def energy(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.spacing)

    def spectral_energy(self):
        return float(np.sum(np.abs(self.spectrum()) ** 2) * self.spacing / self.n)

    def l2_normalized(self):
        return PeriodicField(self.n, self.period, self.values / math.sqrt(self.energy()))

    def to_grid(self):
        """Real part as a GridFunction on [-L/2, L/2)."""
        spec = GridSpec(1, -self.period / 2, self.period / 2, self.n)
        return GridFunction(spec, np.real(self.values).copy())

    @classmethod
    def from_grid(cls, f):
        if f.spec.d != 1:
            raise DomainError("periodic fields are one-dimensional")
        return cls(f.spec.n, f.spec.hi[0] - f.spec.lo[0], f.values)


def apply_multiplier(f, m):
    """Multiply the spectrum by the sampled multiplier m(frequencies)."""
    out = np.fft.ifft(f.spectrum() * m)
    if not np.iscomplexobj(f.values):
        out = out.real
    return PeriodicField(f.n, f.period, out)


def _check_band(f, top):
    if not top < f.nyquist:
        raise AliasingError(f"band edge {top} is not below the Nyquist frequency {f.nyquist}; "
                            f"need more than {int(math.ceil(2 * top * f.period))} samples")


def lp_project(f, k):
    """Q_k f: spectrum times phi_k = psi(2^-k xi) - psi(2^-k+1 xi)."""
    _check_band(f, 2.0 ** (k + 1))
    return apply_multiplier(f, phi_k(f.frequencies(), k))


def partial_sum(f, k0, K):
    """(psi_K - psi_{k0-1}) applied directly, equal to the sum of Q_k for k0 <= k <= K."""
    if K < k0:
        raise DomainError("need k0 <= K")
    _check_band(f, 2.0 ** (K + 1))
    xi = f.frequencies()
    return apply_multiplier(f, psi_k(xi, K) - psi_k(xi, k0 - 1))


def _as_grid(f):
    return f.to_grid() if isinstance(f, PeriodicField) else f


def _as_periodic(f):
    return f if isinstance(f, PeriodicField) else PeriodicField.from_grid(f)


EXPERIMENT_QUAD = DEFAULT_QUAD.__class__(DEFAULT_QUAD.n_radial, DEFAULT_QUAD.n_angular, 1.0)


def circle_average_l1(f1, f2, quad=None, backend=None):
    """||A_1(f1, f2)||_1 with the d = 1 circle average."""
    m = bilinear_spherical_average(_as_grid(f1), _as_grid(f2), 1.0, quad=quad or EXPERIMENT_QUAD, backend=backend)
    return lp_norm(m, 1)


def lp_decay_values(f1, f2, k_list, identity=False, quad=None, backend=None):
    """[(k, ||A_1(Q_k f1, f2)||_1)]; ``identity`` replaces Q_k by the identity (control run)."""
    f1p = _as_periodic(f1)
    out = []
    for k in k_list:
        g = f1p if identity else lp_project(f1p, int(k))
        out.append((int(k), circle_average_l1(g, f2, quad, backend)))
    return out


def lp_decay_experiment(f1, f2, k_list, identity=False, quad=None, backend=None):
    """Slope of log2 ||A_1(Q_k f1, f2)||_1 against k.

    Values that vanish to rounding (the projection annihilated f1) are
    dropped before fitting.
    """
    vals = lp_decay_values(f1, f2, k_list, identity, quad, backend)
    scale = math.sqrt(_as_periodic(f1).energy() * _as_periodic(f2).energy())
    good = [(2.0 ** k, v) for k, v in vals if v > 1e-12 * scale]
    if len(good) < 3:
        raise InsufficientDataError(f"only {len(good)} k values give a nonzero norm")
    return fit_power_law(good)


def continuity_d1_values(f1, f2, h_list, t, quad=None, backend=None):
    f1, f2 = _as_grid(f1), _as_grid(f2)
    out = []
    for h in h_list:
        df = f1 - shift(f1, h)
        m = bilinear_spherical_average(df, f2, 1.0, quad=quad or EXPERIMENT_QUAD, backend=backend)
        out.append((float(h), lp_norm(m, t.r)))
    return out


def continuity_d1_experiment(f1, f2, h_list, t, quad=None, backend=None):
    """Exponent of h -> ||A_1(f1 - f1(. - h), f2)||_r."""
    if not in_region(1, t):
        raise DomainError(f"{t} is outside the d = 1 boundedness hull")
    if any(not (0 < h < 1) for h in h_list):
        raise DomainError("shifts must lie in (0, 1)")
    return fit_power_law(continuity_d1_values(f1, f2, h_list, t, quad, backend))


def half_period_window(n, period):
    """Smooth window supported in [-L/4, L/4]."""
    x = PeriodicField.sample_points(n, period)
    return bump_psi(x / (period / 8.0))


def _random_spectrum(n, period, rng, amplitude):
    xi = np.fft.rfftfreq(n, period / n)
    amp = amplitude(xi)
    coef = amp * (rng.standard_normal(xi.size) + 1j * rng.standard_normal(xi.size))
    return np.fft.irfft(coef, n)


def pink_noise(n, period, rng, xi_min=0.25):
    """Windowed noise with equal expected energy per frequency octave, L^2-normalized."""
    top = n / (4.0 * period)

    def amp(xi):
        a = np.zeros_like(xi)
        band = (xi >= xi_min) & (xi <= top)
        a[band] = xi[band] ** -0.5
        return a

    v = _random_spectrum(n, period, rng, amp) * half_period_window(n, period)
    return PeriodicField(n, period, v).l2_normalized()


def low_frequency_noise(n, period, rng, xi_max=1.0):
    """Windowed noise band-limited to |xi| <= xi_max before windowing, L^2-normalized."""
    v = _random_spectrum(n, period, rng, lambda xi: (xi <= xi_max).astype(float))
    v = v * half_period_window(n, period)
    return PeriodicField(n, period, v).l2_normalized()


LP_SUITE_SEED = 20240611
LP_SUITE_SIZE = 3
LP_SUITE_N = 2 ** 14
LP_SUITE_PERIOD = 16.0
LP_SUITE_KS = (1, 2, 3, 4, 5, 6)


def lp_decay_suite(seed=LP_SUITE_SEED, size=LP_SUITE_SIZE, n=LP_SUITE_N, period=LP_SUITE_PERIOD):
    """Frozen list of (f1, f2) pairs: pink-noise f1 against low-frequency f2."""
    rng = np.random.default_rng(seed)
    return [(pink_noise(n, period, rng), low_frequency_noise(n, period, rng)) for _ in range(size)]
