"""Geometric mmWave channel model: steering vectors, random path generation,
and synthesis of the Tx-RIS, RIS-Rx, Tx-Rx, and effective channels.

Conventions
-----------
* Steering vectors store entries ``exp(+j*pi*m*phi)/sqrt(M)`` (the conjugate
  transpose written out).  A single fixed sign convention is used everywhere.
* RIS elements are laid out on an ``Nx x Ny`` grid.  A flattened index ``n``
  (0-based) maps to the grid as ``n_x = n // Ny`` and ``n_y = n % Ny``, i.e.
  the y-index varies fastest.  This matches the Kronecker order of
  :func:`ris_response` (x-axis factor first) and is the layout assumed by
  every function that consumes a flattened reflection-coefficient vector.
* Powers are stored internally in watts; dBm values are converted once at
  config ingestion.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

HOP_TX_RIS = "tx_ris"
HOP_RIS_RX = "ris_rx"
HOP_TX_RX = "tx_rx"
HOP_KINDS = (HOP_TX_RIS, HOP_RIS_RX, HOP_TX_RX)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts * 1000.0)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count, spacing, carrier wavelength."""

    element_count: int
    element_spacing: float
    wavelength: float

    def __post_init__(self):
        if self.element_count < 1:
            raise ValueError("element_count must be >= 1")
        if self.element_spacing <= 0 or self.wavelength <= 0:
            raise ValueError("element_spacing and wavelength must be positive")


@dataclass(frozen=True)
class RisGeometry:
    """Uniform rectangular RIS array in the x-y plane."""

    nx: int
    ny: int
    element_spacing: float
    wavelength: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be >= 1")
        if self.element_spacing <= 0 or self.wavelength <= 0:
            raise ValueError("element_spacing and wavelength must be positive")

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def k(self) -> float:
        """Phase constant 2*pi*d/lambda."""
        return 2.0 * np.pi * self.element_spacing / self.wavelength


@dataclass
class PathSet:
    """Angles and complex gains for one propagation hop.

    ``departure``/``arrival`` hold one angle record per path: a scalar
    boresight angle for ULA endpoints, or an ``(elevation, azimuth)`` pair
    for the RIS endpoint.  Gains are kept sorted by non-increasing
    magnitude.
    """

    kind: str
    gains: np.ndarray
    departure: np.ndarray
    arrival: np.ndarray

    def __post_init__(self):
        if self.kind not in HOP_KINDS:
            raise ValueError(f"unknown hop kind {self.kind!r}")
        self.gains = np.asarray(self.gains, dtype=complex)
        self.departure = np.asarray(self.departure, dtype=float)
        self.arrival = np.asarray(self.arrival, dtype=float)
        if self.gains.size < 1:
            raise ValueError("a PathSet needs at least one path")
        mags = np.abs(self.gains)
        if np.any(mags[:-1] < mags[1:] - 1e-15):
            raise ValueError("gains must be sorted by non-increasing magnitude")

    @property
    def count(self) -> int:
        return self.gains.size


@dataclass
class ChannelRealization:
    """One draw of the three channel matrices plus losses and noise power."""

    h1: np.ndarray  # N x M_t
    h2: np.ndarray  # M_r x N
    h3: np.ndarray  # M_r x M_t
    pl_r: float
    pl_d: float
    noise_power: float
    path_sets: dict[str, PathSet]

    def __post_init__(self):
        if self.pl_r <= 0 or self.pl_d <= 0:
            raise ValueError("path losses must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")
        n, m_t = self.h1.shape
        m_r, n2 = self.h2.shape
        if n2 != n or self.h3.shape != (m_r, m_t):
            raise ValueError("channel matrix dimensions are inconsistent")


@dataclass
class SimulationConfig:
    """System, channel, and simulation parameters (linear units internally)."""

    m_t: int = 32
    m_r: int = 32
    n_x: int = 30
    n_y: int = 90
    l1: int = 5
    l2: int = 7
    l3: int = 4
    spacing_wavelengths: float = 0.5
    carrier_frequency: float = 28e9
    d1: float = 100.0
    d2: float = 60.0
    d3: float = 150.0
    path_loss_exponent: float = 2.4
    power_watts: float = dbm_to_watts(30.0)
    noise_watts: float = dbm_to_watts(-90.0)
    bandwidth: float = 251.1886e6
    realizations: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("m_t", "m_r", "n_x", "n_y", "l1", "l2", "l3",
                     "realizations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("spacing_wavelengths", "carrier_frequency", "d1", "d2",
                     "d3", "path_loss_exponent", "power_watts", "noise_watts",
                     "bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # Angular resolution assumption: L1+L3 << M_t, L2+L3 << M_r,
        # L1, L2 << N.  Warn, do not enforce.
        if (self.l1 + self.l3 > self.m_t // 2
                or self.l2 + self.l3 > self.m_r // 2
                or max(self.l1, self.l2) > self.n // 2):
            warnings.warn(
                "path counts are not small relative to array sizes; the "
                "asymptotic approximation may be poor", stacklevel=2)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def spacing(self) -> float:
        return self.spacing_wavelengths * self.wavelength

    @property
    def n(self) -> int:
        return self.n_x * self.n_y

    @property
    def tx_geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.m_t, self.spacing, self.wavelength)

    @property
    def rx_geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.m_r, self.spacing, self.wavelength)

    @property
    def ris_geometry(self) -> RisGeometry:
        return RisGeometry(self.n_x, self.n_y, self.spacing, self.wavelength)


_CONFIG_KEYS = {
    "M_t": ("m_t", int),
    "M_r": ("m_r", int),
    "N_x": ("n_x", int),
    "N_y": ("n_y", int),
    "L1": ("l1", int),
    "L2": ("l2", int),
    "L3": ("l3", int),
    "d": ("spacing_wavelengths", float),
    "f": ("carrier_frequency", float),
    "d1": ("d1", float),
    "d2": ("d2", float),
    "d3": ("d3", float),
    "path_loss_exponent": ("path_loss_exponent", float),
    "B": ("bandwidth", float),
    "realizations": ("realizations", int),
    "seed": ("seed", int),
}


def load_config(path: str, ignore_sections: tuple[str, ...] = ()) -> SimulationConfig:
    """Read a flat sectioned ``key = value`` config file.

    Keys mirror the simulation-parameter table: ``M_t``, ``M_r``, ``N_x``,
    ``N_y``, ``d`` (in wavelengths), ``f`` (Hz), ``P`` (dBm), ``sigma2``
    (dBm), ``B`` (Hz), ``L1``/``L2``/``L3``, ``d1``/``d2``/``d3`` (m),
    ``path_loss_exponent``, ``realizations``, ``seed``.  Section names are
    ignored (``ignore_sections`` are skipped entirely); keys must be unique
    across the remaining file.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    kwargs = {}
    for section in parser.sections():
        if section in ignore_sections:
            continue
        for key, raw in parser.items(section):
            if key == "p":
                kwargs["power_watts"] = dbm_to_watts(float(raw))
            elif key == "sigma2":
                kwargs["noise_watts"] = dbm_to_watts(float(raw))
            else:
                for name, (attr, cast) in _CONFIG_KEYS.items():
                    if key == name.lower():
                        kwargs[attr] = cast(float(raw)) if cast is int \
                            else cast(raw)
                        break
                else:
                    raise ValueError(f"unknown config key {key!r}")
    return SimulationConfig(**kwargs)


def steering_vector(phi: float, m: int) -> np.ndarray:
    """Normalized steering vector; entry ``i`` is ``exp(+j*pi*i*phi)/sqrt(M)``."""
    if m < 1:
        raise ValueError("M must be >= 1")
    idx = np.arange(m)
    return np.exp(1j * np.pi * idx * phi) / np.sqrt(m)


def ula_response(theta: float, geometry: ArrayGeometry) -> np.ndarray:
    """Array response of a ULA at boresight angle ``theta``."""
    phi = 2.0 * geometry.element_spacing / geometry.wavelength * np.sin(theta)
    return steering_vector(phi, geometry.element_count)


def ris_response(phi: float, theta_az: float,
                 geometry: RisGeometry) -> np.ndarray:
    """RIS array response for elevation ``phi`` and azimuth ``theta_az``.

    Kronecker product of the x-axis factor (length ``Nx``) and the y-axis
    factor (length ``Ny``), in that order.
    """
    scale = 2.0 * geometry.element_spacing / geometry.wavelength
    arg_x = scale * np.sin(phi) * np.cos(theta_az)
    arg_y = scale * np.sin(phi) * np.sin(theta_az)
    return np.kron(steering_vector(arg_x, geometry.nx),
                   steering_vector(arg_y, geometry.ny))


def _open_closed_uniform(rng: np.random.Generator, high: float,
                         size: int) -> np.ndarray:
    """Uniform samples on the half-open interval ``(0, high]``."""
    return (1.0 - rng.random(size)) * high


def sample_paths(rng: np.random.Generator, l: int, kind: str,
                 config: SimulationConfig) -> PathSet:
    """Draw one hop's path set: uniform continuous angles, CSCG unit gains.

    Elevations are uniform on (0, pi/2], azimuths on (0, 2*pi]; ULA
    boresight angles use the full azimuth range so their direction cosines
    cover [-1, 1].  Gains are sorted by non-increasing magnitude.
    Deterministic for a given generator state.
    """
    if l < 1:
        raise ValueError("L must be >= 1")
    if kind not in HOP_KINDS:
        raise ValueError(f"unknown hop kind {kind!r}")

    def ris_angles():
        elev = _open_closed_uniform(rng, np.pi / 2.0, l)
        azim = _open_closed_uniform(rng, 2.0 * np.pi, l)
        return np.column_stack([elev, azim])

    def ula_angles():
        return _open_closed_uniform(rng, 2.0 * np.pi, l)

    if kind == HOP_TX_RIS:
        departure = ula_angles()  # Tx side
        arrival = ris_angles()    # RIS side
    elif kind == HOP_RIS_RX:
        departure = ris_angles()  # RIS side
        arrival = ula_angles()    # Rx side
    else:
        departure = ula_angles()
        arrival = ula_angles()

    gains = (rng.standard_normal(l) + 1j * rng.standard_normal(l)) / np.sqrt(2)
    order = np.argsort(-np.abs(gains), kind="stable")
    return PathSet(kind=kind, gains=gains[order], departure=departure[order],
                   arrival=arrival[order])


def synth_channel(paths: PathSet, tx_geom, rx_geom) -> np.ndarray:
    """Synthesize one hop's channel matrix from its path set.

    Returns ``sqrt(dim_rx*dim_tx/L) * sum_l g_l * rx_vec_l * tx_vec_l^H``,
    where the RIS endpoint uses :func:`ris_response` and terminal endpoints
    use :func:`ula_response`.
    """
    if paths.kind == HOP_TX_RIS:
        if not isinstance(rx_geom, RisGeometry):
            raise ValueError("tx_ris hop expects a RisGeometry receive side")
        rx_vecs = [ris_response(e, a, rx_geom) for e, a in paths.arrival]
        tx_vecs = [ula_response(t, tx_geom) for t in paths.departure]
        dim_rx, dim_tx = rx_geom.n, tx_geom.element_count
    elif paths.kind == HOP_RIS_RX:
        if not isinstance(tx_geom, RisGeometry):
            raise ValueError("ris_rx hop expects a RisGeometry transmit side")
        rx_vecs = [ula_response(t, rx_geom) for t in paths.arrival]
        tx_vecs = [ris_response(e, a, tx_geom) for e, a in paths.departure]
        dim_rx, dim_tx = rx_geom.element_count, tx_geom.n
    else:
        rx_vecs = [ula_response(t, rx_geom) for t in paths.arrival]
        tx_vecs = [ula_response(t, tx_geom) for t in paths.departure]
        dim_rx, dim_tx = rx_geom.element_count, tx_geom.element_count

    a_rx = np.column_stack(rx_vecs)
    a_tx = np.column_stack(tx_vecs)
    scale = np.sqrt(dim_rx * dim_tx / paths.count)
    return scale * (a_rx * paths.gains) @ a_tx.conj().T


def path_loss(config: SimulationConfig) -> tuple[float, float]:
    """Cascaded and direct path losses.

    ``PL_r = lambda^2 / (64*pi^3 * d1^e * d2^e)`` and
    ``PL_d = lambda^2 / (16*pi^2 * d3^e)`` with exponent ``e`` from config.
    """
    lam = config.wavelength
    e = config.path_loss_exponent
    pl_r = lam ** 2 / (64.0 * np.pi ** 3 * config.d1 ** e * config.d2 ** e)
    pl_d = lam ** 2 / (16.0 * np.pi ** 2 * config.d3 ** e)
    return pl_r, pl_d


def effective_channel(realization: ChannelRealization,
                      theta: np.ndarray) -> np.ndarray:
    """Effective Tx-Rx channel ``sqrt(PL_r)*H2*diag(theta)*H1 + sqrt(PL_d)*H3``."""
    theta = np.asarray(theta, dtype=complex)
    if theta.shape != (realization.h1.shape[0],):
        raise ValueError("theta length must equal the RIS element count")
    if np.any(np.abs(np.abs(theta) - 1.0) > 1e-9):
        raise ValueError("theta entries must have unit modulus")
    cascaded = realization.h2 @ (theta[:, None] * realization.h1)
    return (np.sqrt(realization.pl_r) * cascaded
            + np.sqrt(realization.pl_d) * realization.h3)


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    """Per-realization generator derived from the master seed.

    Uses ``SeedSequence(master_seed, spawn_key=(index,))`` so realizations
    are independent and reproducible under parallel execution.
    """
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _min_cosine_gap(angles: np.ndarray, scale: float) -> float:
    """Smallest pairwise distance between steering arguments.

    Arguments are ``scale*sin(angle)``; the steering vector is periodic
    with period 2, so distances wrap accordingly.
    """
    phi = np.sort(scale * np.sin(np.asarray(angles, dtype=float)))
    if phi.size < 2:
        return np.inf
    gaps = np.abs(phi[:, None] - phi[None, :])
    gaps = np.minimum(gaps, 2.0 - gaps)
    return float(gaps[np.triu_indices(phi.size, 1)].min())


def realize_channels(config: SimulationConfig, rng: np.random.Generator,
                     max_tries: int = 1000) -> ChannelRealization:
    """Sample all three hops and synthesize the channel matrices.

    Path counts L denote *resolvable* paths, so a draw is accepted only
    when the direction cosines of all paths seen by each terminal array
    are separated by that array's resolution (2/M in steering-argument
    units).  If no draw within ``max_tries`` meets the target, the
    best-separated draw is kept.
    """
    scale = 2.0 * config.spacing / config.wavelength
    best = None
    best_gap = -np.inf
    for _ in range(max_tries):
        p1 = sample_paths(rng, config.l1, HOP_TX_RIS, config)
        p2 = sample_paths(rng, config.l2, HOP_RIS_RX, config)
        p3 = sample_paths(rng, config.l3, HOP_TX_RX, config)
        tx_gap = _min_cosine_gap(
            np.concatenate([p1.departure, p3.departure]), scale)
        rx_gap = _min_cosine_gap(
            np.concatenate([p2.arrival, p3.arrival]), scale)
        margin = min(tx_gap * config.m_t, rx_gap * config.m_r)
        if margin > best_gap:
            best_gap = margin
            best = (p1, p2, p3)
        if margin >= 2.0:
            break
    p1, p2, p3 = best
    ris = config.ris_geometry
    h1 = synth_channel(p1, config.tx_geometry, ris)
    h2 = synth_channel(p2, ris, config.rx_geometry)
    h3 = synth_channel(p3, config.tx_geometry, config.rx_geometry)
    pl_r, pl_d = path_loss(config)
    return ChannelRealization(h1=h1, h2=h2, h3=h3, pl_r=pl_r, pl_d=pl_d,
                              noise_power=config.noise_watts,
                              path_sets={HOP_TX_RIS: p1, HOP_RIS_RX: p2,
                                         HOP_TX_RX: p3})
