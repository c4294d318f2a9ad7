"""Seeded mmWave clustered channels from the RHS base station to each user."""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class NonPositiveDistance(ValueError):
    pass


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


@dataclass(frozen=True)
class ChannelParams:
    carrier_freq: float = 28e9
    bandwidth: float = 100e6
    noise_density_dbm: float = -174.0
    path_count: int = 15
    cell_radius: float = 150.0
    bs_height: float = 10.0
    ue_height: float = 1.5
    D: int = 1
    rx_spacing: float = None
    min_distance: float = 10.0

    def __post_init__(self):
        if self.rx_spacing is None:
            object.__setattr__(self, "rx_spacing", self.wavelength / 2)
        for name in ("carrier_freq", "bandwidth", "cell_radius", "bs_height", "ue_height", "rx_spacing"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.path_count < 1 or self.D < 1:
            raise ValueError("path_count and D must be >= 1")
        if not 0 <= self.min_distance < self.cell_radius:
            raise ValueError("min_distance must lie in [0, cell_radius)")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def noise_power(self):
        """Noise power in watts over the full bandwidth."""
        return float(dbm_to_watts(self.noise_density_dbm + 10.0 * np.log10(self.bandwidth)))


@dataclass
class ChannelSet:
    """Per-user channels ``H[nu]`` of shape ``(D, M^2)`` plus the noise power in watts."""

    H: np.ndarray
    noise_power: float
    seed: int = None
    positions: np.ndarray = field(default=None, repr=False)
    directions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.ndim != 3:
            raise ValueError("H must have shape (N_u, D, M^2)")
        if not np.all(np.isfinite(self.H)):
            raise ValueError("channel entries must be finite")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")

    @property
    def n_users(self):
        return self.H.shape[0]

    @property
    def D(self):
        return self.H.shape[1]

    @property
    def n_elements(self):
        return self.H.shape[2]

    def to_dict(self):
        n_u, d, n = self.H.shape
        return {
            "dims": {"n_users": n_u, "D": d, "n_elements": n},
            "seed": self.seed,
            "noise_power": self.noise_power,
            # interleaved (re, im) pairs of the row-major flattened H
            "H": np.column_stack([self.H.real.ravel(), self.H.imag.ravel()]).ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        dims = data["dims"]
        pairs = np.asarray(data["H"], dtype=float).reshape(-1, 2)
        H = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dims["n_users"], dims["D"], dims["n_elements"])
        return cls(H=H, noise_power=float(data["noise_power"]), seed=data.get("seed"))

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def load_channel_set(path):
    with open(path) as fh:
        return ChannelSet.from_dict(json.load(fh))


def path_loss_db(d):
    """Path loss ``53.22 + 35.3 log10(d)`` in dB for a distance in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDistance("distance must be positive")
    out = 53.22 + 35.3 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def array_response_tx(geom, phi, theta):
    """Normalized planar-array response, length ``M^2``, in element flat order."""
    p = geom.element_positions
    phase = geom.wavenumber * (p[:, 0] * np.cos(phi) * np.sin(theta) + p[:, 1] * np.sin(phi) * np.sin(theta))
    return np.exp(1j * phase) / np.sqrt(geom.n_elements)


def array_response_rx(D, d_u, phi, wavelength):
    """Normalized uniform-linear-array response of length ``D``."""
    phase = 2 * np.pi / wavelength * d_u * np.arange(D) * np.sin(phi)
    return np.exp(1j * phase) / np.sqrt(D)


def assemble_channel(loss_db, gains, aod_phi, aod_theta, aoa_phi, geom, D, d_u, wavelength):
    """Sum of ``L`` rank-one paths scaled by path loss and ``sqrt(M^2 D / L)``."""
    L = len(gains)
    H = np.zeros((D, geom.n_elements), dtype=complex)
    for g, pt, tt, pr in zip(gains, aod_phi, aod_theta, aoa_phi):
        H += g * np.outer(array_response_rx(D, d_u, pr, wavelength), array_response_tx(geom, pt, tt).conj())
    return np.sqrt(10.0 ** (-loss_db / 10.0)) * np.sqrt(geom.n_elements * D / L) * H


def seed_streams(seed):
    """Independent ``SeedSequence`` children for (channel, initial point)."""
    return np.random.SeedSequence(seed).spawn(2)


def make_rng(seed_seq):
    return np.random.Generator(np.random.Philox(seed_seq))


def los_direction(position, bs_height):
    """Polar/azimuth angles of the line of sight from the RHS centre to a user."""
    x, y, z = position
    horizontal = np.hypot(x, y)
    theta = np.arctan2(horizontal, bs_height - z)
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    return theta, phi


def sample_channel_set(seed, params, geom, n_users):
    """Draw one channel realization per user.

    Users are placed uniformly (by area) in the annulus
    ``[min_distance, cell_radius]``; each user gets its own Philox stream for
    placement and for the ``L`` path gains and angles.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    channel_ss, _ = seed_streams(seed)
    H = np.empty((n_users, params.D, geom.n_elements), dtype=complex)
    positions = np.empty((n_users, 3))
    directions = np.empty((n_users, 2))
    L = params.path_count
    for nu, user_ss in enumerate(channel_ss.spawn(n_users)):
        place_ss, path_ss = user_ss.spawn(2)
        place = make_rng(place_ss)
        r_lo, r_hi = params.min_distance, params.cell_radius
        r = np.sqrt(place.uniform(r_lo**2, r_hi**2))
        az = place.uniform(0.0, 2 * np.pi)
        positions[nu] = (r * np.cos(az), r * np.sin(az), params.ue_height)
        directions[nu] = los_direction(positions[nu], params.bs_height)
        dist = np.hypot(r, params.bs_height - params.ue_height)

        paths = make_rng(path_ss)
        gains = (paths.standard_normal(L) + 1j * paths.standard_normal(L)) / np.sqrt(2)
        aod_phi = paths.uniform(0.0, 2 * np.pi, L)
        aod_theta = paths.uniform(-np.pi / 2, np.pi / 2, L)
        aoa_phi = paths.uniform(0.0, 2 * np.pi, L)
        H[nu] = assemble_channel(
            path_loss_db(dist), gains, aod_phi, aod_theta, aoa_phi, geom, params.D, params.rx_spacing, params.wavelength
        )
    return ChannelSet(H=H, noise_power=params.noise_power, seed=seed, positions=positions, directions=directions)
