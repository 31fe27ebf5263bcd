"""mmWave sparse channel synthesis for the IRS-assisted downlink.

Geometry conventions: the IRS is a uniform planar array on the X-Z plane of
its local frame with the facade normal along local +Y, elements indexed
symmetrically about the array center. The vertical departure angle theta is
measured from the local +Z axis and restricted to [0, pi/2]; the horizontal
angle phi is measured from the local +X axis and restricted to [0, pi]
because the surface cannot reflect behind itself. Scenarios must orient and
place the IRS frame so that every node satisfies both restrictions. The
cognitive base station is a uniform linear array along the global X axis
whose departure angle eta is measured from broadside.

Channels follow the sparse geometric model: a line-of-sight path plus a few
single-bounce paths with CN(0,1) complex gains, scaled so that the expected
squared norm equals (elements) / (average path loss).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from irsec.linalg import check_hermitian, psd_sqrt

THETA_MAX = np.pi / 2
PHI_MAX = np.pi
ANGLE_CLAMP_TOL = 1e-6  # geometry may overshoot the domain by float noise only


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna counts and element spacings for the CBS ULA and the IRS UPA."""

    m: int
    n1: int
    n2: int
    d: float
    d1: float
    d2: float
    wavelength: float

    def __post_init__(self):
        if min(self.m, self.n1, self.n2) < 1:
            raise ValueError("antenna and element counts must be at least 1")
        if min(self.d, self.d1, self.d2, self.wavelength) <= 0:
            raise ValueError("spacings and wavelength must be positive")

    @property
    def n(self) -> int:
        return self.n1 * self.n2


def half_wavelength_geometry(m: int, n1: int, n2: int, carrier_hz: float = 28e9) -> ArrayGeometry:
    lam = 299_792_458.0 / carrier_hz
    return ArrayGeometry(m=m, n1=n1, n2=n2, d=lam / 2, d1=lam / 2, d2=lam / 2, wavelength=lam)


@dataclass(frozen=True)
class AnglePair:
    theta: float
    phi: float = 0.0


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    departure: AnglePair
    arrival: AnglePair | None = None


@dataclass
class ChannelParams:
    """Per-link synthesis parameters: path count, loss, and frozen angles.

    The first path is line of sight. NLoS offsets are drawn once (uniformly
    over the valid angle domain) and stay rigidly attached to the LoS angle,
    so shifting the LoS angle moves the whole path bundle. Links that leave
    the CBS also carry a departure angle eta per path.
    """

    path_count: int
    avg_path_loss: float
    path_loss_exponent: float
    los_angles: AnglePair
    nlos_angle_offsets: list[AnglePair] = field(default_factory=list)
    cbs_los_eta: float | None = None
    cbs_nlos_eta_offsets: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.path_count < 1:
            raise ValueError("path_count must be >= 1")
        if self.avg_path_loss <= 0:
            raise ValueError("avg_path_loss must be positive")
        if len(self.nlos_angle_offsets) != self.path_count - 1:
            raise ValueError("need one NLoS offset per non-LoS path")


@dataclass
class LinkGeometry:
    """ChannelParams for every link of the network, derived from positions."""

    cbs_irs: ChannelParams
    irs_su: ChannelParams
    irs_pu: ChannelParams
    irs_eves: list[ChannelParams]


@dataclass
class ChannelRealization:
    geom: ArrayGeometry
    h_ci: np.ndarray                      # N x M CBS-to-IRS matrix
    h_is: np.ndarray                      # N-vector IRS-to-SU
    h_ip: np.ndarray                      # N-vector IRS-to-PU
    eve_nominal: list[np.ndarray]         # N-vectors at the estimated centers
    eve_params: list[ChannelParams]       # generation parameters per Eve
    irs_corr_sqrt: np.ndarray | None = None  # set when IRS spatial correlation applies

    def __post_init__(self):
        n, m = self.geom.n, self.geom.m
        if self.h_ci.shape != (n, m):
            raise ValueError(f"h_ci must be {n}x{m}, got {self.h_ci.shape}")
        for v in (self.h_is, self.h_ip, *self.eve_nominal):
            if v.shape != (n,):
                raise ValueError("IRS-side channel vectors must have length N")
            if not np.all(np.isfinite(v)):
                raise ValueError("channel entries must be finite")


def clamp_angle(value: float, low: float, high: float) -> float:
    if value < low - ANGLE_CLAMP_TOL or value > high + ANGLE_CLAMP_TOL:
        raise ValueError(f"angle {value:.6f} outside [{low:.6f}, {high:.6f}]")
    return float(min(max(value, low), high))


def ula_steering(geom: ArrayGeometry, eta: float) -> np.ndarray:
    """Unit-norm CBS steering vector with symmetric element offsets.

    Entry m carries phase (2 pi / lambda) (m - (M+1)/2) d sin(eta).
    """
    offsets = np.arange(1, geom.m + 1) - (geom.m + 1) / 2
    phase = 2 * np.pi / geom.wavelength * geom.d * np.sin(eta) * offsets
    return np.exp(1j * phase) / np.sqrt(geom.m)


def upa_steering(geom: ArrayGeometry, angles: AnglePair) -> np.ndarray:
    """Unit-norm IRS steering vector, the Kronecker product of the horizontal
    and vertical factors scaled by 1/sqrt(N).

    Element (m, n) carries phase
    (2 pi / lambda) [(m - (N1+1)/2) d1 sin(theta) cos(phi)
                     + (n - (N2+1)/2) d2 cos(theta)].
    """
    theta, phi = angles.theta, angles.phi
    if not (-1e-12 <= theta <= THETA_MAX + 1e-12 and -1e-12 <= phi <= PHI_MAX + 1e-12):
        raise ValueError(f"angles ({theta}, {phi}) outside [0, pi/2] x [0, pi]")
    k = 2 * np.pi / geom.wavelength
    m_off = np.arange(1, geom.n1 + 1) - (geom.n1 + 1) / 2
    n_off = np.arange(1, geom.n2 + 1) - (geom.n2 + 1) / 2
    a_h = np.exp(1j * k * geom.d1 * np.sin(theta) * np.cos(phi) * m_off)
    a_v = np.exp(1j * k * geom.d2 * np.cos(theta) * n_off)
    return np.kron(a_h, a_v) / np.sqrt(geom.n)


def upa_steering_grid(geom: ArrayGeometry, thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Steering vectors for a batch of angles, one per row (len(thetas) x N)."""
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    k = 2 * np.pi / geom.wavelength
    m_off = np.arange(1, geom.n1 + 1) - (geom.n1 + 1) / 2
    n_off = np.arange(1, geom.n2 + 1) - (geom.n2 + 1) / 2
    a_h = np.exp(1j * k * geom.d1 * (np.sin(thetas) * np.cos(phis))[:, None] * m_off[None, :])
    a_v = np.exp(1j * k * geom.d2 * np.cos(thetas)[:, None] * n_off[None, :])
    return (a_h[:, :, None] * a_v[:, None, :]).reshape(len(thetas), geom.n) / np.sqrt(geom.n)


def _cn_gains(rng: np.random.Generator, count: int) -> np.ndarray:
    return (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2)


def _shifted(base: AnglePair, offset: AnglePair) -> AnglePair:
    return AnglePair(
        float(np.clip(base.theta + offset.theta, 0.0, THETA_MAX)),
        float(np.clip(base.phi + offset.phi, 0.0, PHI_MAX)),
    )


def synth_irs_user_channel(
    geom: ArrayGeometry, params: ChannelParams, rng_seed: int | np.random.Generator
) -> np.ndarray:
    """Draw one IRS-to-user channel h = sqrt(N/(L rho)) sum_i alpha_i a(theta_i, phi_i)."""
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    gains = _cn_gains(rng, params.path_count)
    h = np.zeros(geom.n, dtype=complex)
    for i in range(params.path_count):
        ang = params.los_angles if i == 0 else _shifted(params.los_angles, params.nlos_angle_offsets[i - 1])
        h += gains[i] * upa_steering(geom, ang)
    return np.sqrt(geom.n / (params.path_count * params.avg_path_loss)) * h


def synth_cbs_irs_channel(
    geom: ArrayGeometry, params: ChannelParams, rng_seed: int | np.random.Generator
) -> np.ndarray:
    """Draw the N x M CBS-to-IRS matrix sqrt(NM/(L rho)) sum_j alpha_j a_rx a_tx^H."""
    if params.cbs_los_eta is None:
        raise ValueError("CBS-IRS link needs a departure angle per path")
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    gains = _cn_gains(rng, params.path_count)
    h = np.zeros((geom.n, geom.m), dtype=complex)
    for j in range(params.path_count):
        if j == 0:
            arrival = params.los_angles
            eta = params.cbs_los_eta
        else:
            arrival = _shifted(params.los_angles, params.nlos_angle_offsets[j - 1])
            eta = float(np.clip(params.cbs_los_eta + params.cbs_nlos_eta_offsets[j - 1], -np.pi / 2, np.pi / 2))
        a_rx = upa_steering(geom, arrival)
        a_tx = ula_steering(geom, eta)
        h += gains[j] * np.outer(a_rx, a_tx.conj())
    return np.sqrt(geom.n * geom.m / (params.path_count * params.avg_path_loss)) * h


def effective_channel(h: np.ndarray, h_ci: np.ndarray) -> np.ndarray:
    """Cascaded channel diag(h^H) H seen through the IRS by a single-antenna node."""
    h = np.asarray(h)
    h_ci = np.asarray(h_ci)
    if h.ndim != 1 or h_ci.ndim != 2 or h_ci.shape[0] != h.shape[0]:
        raise ValueError(f"dimension mismatch: h {h.shape}, h_ci {h_ci.shape}")
    return h.conj()[:, None] * h_ci


def node_angles_at_irs(
    irs_position: np.ndarray, node_position: np.ndarray, irs_rotation_z: float = 0.0
) -> tuple[AnglePair, float]:
    """LoS angles and distance from the IRS to a node, in the IRS local frame.

    Raises when the node sits behind the facade (negative local Y): the
    surface cannot reflect backwards.
    """
    delta = np.asarray(node_position, dtype=float) - np.asarray(irs_position, dtype=float)
    dist = float(np.linalg.norm(delta))
    if dist < 1e-9:
        raise ValueError("node co-located with the IRS")
    c, s = np.cos(irs_rotation_z), np.sin(irs_rotation_z)
    local = np.array([c * delta[0] + s * delta[1], -s * delta[0] + c * delta[1], delta[2]])
    if local[1] < -1e-9 * dist:
        raise ValueError(f"node at {node_position} lies behind the IRS facade")
    theta = clamp_angle(float(np.arccos(np.clip(local[2] / dist, -1.0, 1.0))), 0.0, THETA_MAX)
    phi = clamp_angle(float(np.arctan2(max(local[1], 0.0), local[0])), 0.0, PHI_MAX)
    return AnglePair(theta, phi), dist


def cbs_departure_angle(cbs_position: np.ndarray, irs_position: np.ndarray) -> float:
    """ULA departure angle toward the IRS, measured from broadside."""
    delta = np.asarray(irs_position, dtype=float) - np.asarray(cbs_position, dtype=float)
    dist = float(np.linalg.norm(delta))
    if dist < 1e-9:
        raise ValueError("CBS co-located with the IRS")
    return float(np.arcsin(np.clip(delta[0] / dist, -1.0, 1.0)))


def geometry_to_params(
    cbs: np.ndarray,
    irs: np.ndarray,
    su: np.ndarray,
    pu: np.ndarray,
    eve_centers: list[np.ndarray],
    exponent: float,
    path_count: int,
    rng_seed: int | np.random.Generator,
    irs_rotation_z: float = 0.0,
) -> LinkGeometry:
    """Build per-link ChannelParams from node positions.

    LoS angles come from 3D geometry in the IRS frame, the average path loss
    is distance**exponent, and NLoS angles are drawn uniformly over the valid
    domain (stored as offsets from the LoS angle).
    """
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed

    def nlos_offsets(los: AnglePair) -> list[AnglePair]:
        out = []
        for _ in range(path_count - 1):
            t = rng.uniform(0.0, THETA_MAX)
            p = rng.uniform(0.0, PHI_MAX)
            out.append(AnglePair(t - los.theta, p - los.phi))
        return out

    def link(node) -> ChannelParams:
        los, dist = node_angles_at_irs(irs, node, irs_rotation_z)
        return ChannelParams(
            path_count=path_count,
            avg_path_loss=dist**exponent,
            path_loss_exponent=exponent,
            los_angles=los,
            nlos_angle_offsets=nlos_offsets(los),
        )

    cbs_link = link(cbs)
    eta = cbs_departure_angle(cbs, irs)
    cbs_link.cbs_los_eta = eta
    cbs_link.cbs_nlos_eta_offsets = [
        rng.uniform(-np.pi / 2, np.pi / 2) - eta for _ in range(path_count - 1)
    ]
    return LinkGeometry(
        cbs_irs=cbs_link,
        irs_su=link(su),
        irs_pu=link(pu),
        irs_eves=[link(c) for c in eve_centers],
    )


def kronecker_correlation(rho: complex, m: int) -> np.ndarray:
    """Hermitian Toeplitz correlation with entry (i, j) = rho^(j-i) for i <= j."""
    if abs(rho) > 1 + 1e-12:
        raise ValueError(f"|rho| = {abs(rho):.4f} exceeds 1")
    r = np.empty((m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            r[i, j] = rho ** (j - i) if i <= j else np.conj(rho ** (i - j))
    return r


def irs_element_positions(geom: ArrayGeometry) -> np.ndarray:
    """Element coordinates on the local X-Z facade, flattened like upa_steering."""
    x = (np.arange(1, geom.n1 + 1) - (geom.n1 + 1) / 2) * geom.d1
    z = (np.arange(1, geom.n2 + 1) - (geom.n2 + 1) / 2) * geom.d2
    xx, zz = np.meshgrid(x, z, indexing="ij")
    pos = np.zeros((geom.n, 3))
    pos[:, 0] = xx.ravel()
    pos[:, 2] = zz.ravel()
    return pos


def sinc_correlation(geom: ArrayGeometry) -> np.ndarray:
    """IRS spatial correlation sinc(2 ||u_m - u_n|| / lambda) for a rectangular surface."""
    pos = irs_element_positions(geom)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return np.sinc(2 * dist / geom.wavelength)


def apply_spatial_correlation(
    realization: ChannelRealization, r_cbs: np.ndarray, r_irs: np.ndarray
) -> ChannelRealization:
    """Color a realization: H <- R_irs^(1/2) H R_cbs^(1/2), h <- R_irs^(1/2) h."""
    n, m = realization.geom.n, realization.geom.m
    r_cbs = check_hermitian(np.asarray(r_cbs, dtype=complex), name="r_cbs")
    r_irs = check_hermitian(np.asarray(r_irs, dtype=complex), name="r_irs")
    if r_cbs.shape != (m, m) or r_irs.shape != (n, n):
        raise ValueError("correlation matrix dimensions must match the arrays")
    s_cbs = psd_sqrt(r_cbs)
    s_irs = psd_sqrt(r_irs)
    return replace(
        realization,
        h_ci=s_irs @ realization.h_ci @ s_cbs,
        h_is=s_irs @ realization.h_is,
        h_ip=s_irs @ realization.h_ip,
        eve_nominal=[s_irs @ h for h in realization.eve_nominal],
        irs_corr_sqrt=s_irs,
    )
