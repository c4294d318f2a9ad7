"""RHS geometry, holographic interference and normalized radiation amplitudes.

Element ``(m, m')`` (0-based) sits at ``(m d_s, m' d_s, 0)`` and is stored at
flat index ``m + M m'``, i.e. the column-major vectorization of the ``M x M``
element grid.  Feed ``k`` is column ``k`` of every ``M^2 x K`` amplitude
matrix.
"""

from dataclasses import dataclass, field

import numpy as np

SUBSTRATE_INDEX = float(np.sqrt(3.0))


def direction_vector(theta, phi):
    """Unit propagation vector for polar angle ``theta`` and azimuth ``phi``."""
    st = np.sin(theta)
    return np.array([np.cos(phi) * st, np.sin(phi) * st, np.cos(theta)])


@dataclass(frozen=True)
class RhsGeometry:
    M: int
    K: int
    wavelength: float
    element_spacing: float = None
    refractive_index: float = SUBSTRATE_INDEX
    feed_positions: np.ndarray = field(default=None, compare=False)
    feed_depth: float = None

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 4)
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")
        if self.feed_depth is None:
            object.__setattr__(self, "feed_depth", self.wavelength / 2)
        if self.feed_positions is None:
            object.__setattr__(self, "feed_positions", self._line_feeds())
        fp = np.asarray(self.feed_positions, dtype=float)
        if fp.shape != (self.K, 3):
            raise ValueError(f"feed_positions must have shape ({self.K}, 3)")
        object.__setattr__(self, "feed_positions", fp)

    def _line_feeds(self):
        # K feeds evenly spread along x beneath the array centre line
        span = (self.M - 1) * self.element_spacing
        xs = np.linspace(0.0, span, self.K + 2)[1:-1]
        return np.column_stack([xs, np.full(self.K, span / 2), np.full(self.K, -self.feed_depth)])

    @property
    def n_elements(self):
        return self.M * self.M

    @property
    def wavenumber(self):
        return 2 * np.pi / self.wavelength

    @property
    def element_positions(self):
        idx = np.arange(self.n_elements)
        m, mp = idx % self.M, idx // self.M
        return np.column_stack([m * self.element_spacing, mp * self.element_spacing, np.zeros(idx.size)])

    def element_index(self, m, mp):
        return m + self.M * mp


@dataclass(frozen=True)
class AmplitudeBounds:
    """Per-element, per-feed upper bounds ``mu`` (shape ``M^2 x K``) of the box ``[0, mu]``."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mu must be a 2-D array")
        if np.any(mu < 0) or np.any(mu > 1):
            raise ValueError("mu entries must lie in [0, 1]")
        object.__setattr__(self, "mu", mu)

    @property
    def flat(self):
        """Column-major ``vec(mu)`` matching ``vec(X)``."""
        return self.mu.reshape(-1, order="F")

    def contains(self, X, atol=0.0):
        X = np.asarray(X)
        return bool(np.all(X >= -atol) and np.all(X <= self.mu + atol))


def interference_patterns(geom, theta, phi):
    """All ``psi_{k,m,m'}`` for one object-wave direction, shape ``(M^2, K)``.

    ``psi = exp(-j <kappa, p>) * conj(exp(-j <kappa_s, d>))`` with the reference
    wave travelling from each feed to each element at ``refractive_index * kappa``.
    """
    p = geom.element_positions
    kappa = geom.wavenumber * direction_vector(theta, phi)
    object_phase = p @ kappa
    dist = np.linalg.norm(p[:, None, :] - geom.feed_positions[None, :, :], axis=2)
    reference_phase = geom.refractive_index * geom.wavenumber * dist
    return np.exp(-1j * (object_phase[:, None] - reference_phase))


def interference_pattern(geom, k, m, mp, theta, phi):
    return complex(interference_patterns(geom, theta, phi)[geom.element_index(m, mp), k])


def normalized_amplitude(psi):
    """``(Re psi + 1) / 2``, clipped against round-off to ``[0, 1]``."""
    return np.clip((np.real(psi) + 1.0) / 2.0, 0.0, 1.0)


def init_amplitude_bounds(geom, directions):
    """Superpose the normalized patterns of several object beams.

    Parameters
    ----------
    geom : RhsGeometry
    directions : sequence of (theta, phi)
        One object-beam direction per user.

    Returns
    -------
    AmplitudeBounds
        Elementwise mean over users of ``normalized_amplitude(psi)``.
    """
    directions = list(directions)
    if not directions:
        raise ValueError("at least one direction is required")
    mu = np.mean([normalized_amplitude(interference_patterns(geom, th, ph)) for th, ph in directions], axis=0)
    return AmplitudeBounds(np.clip(mu, 0.0, 1.0))
