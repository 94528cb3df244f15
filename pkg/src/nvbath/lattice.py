"""Diamond lattice geometry and random placement of the nitrogen spin bath.

A cube of N_a^3 conventional diamond cells (8 atoms each) is centered on
the lattice site occupied by the central spin.  Bath spins are drawn
uniformly without replacement from the remaining sites, each gets a
static Jahn-Teller delocalization axis from the four <111> directions,
and the full coupling set is computed.  Configurations in which any
pair is coupled more than `exclusion_threshold` times the typical
coupling strength are rejected and redrawn, so the accepted ensemble
represents typical baths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import couplings
from .errors import ConfigError
from .units import CONSTANTS

FORMAT_VERSION = 1

JT_AXES = ("111", "11-1", "1-11", "-111")

# Conventional-cell fractional coordinates: fcc plus the (1/4,1/4,1/4) basis.
_BASIS = np.array(
    [
        [0.00, 0.00, 0.00],
        [0.00, 0.50, 0.50],
        [0.50, 0.00, 0.50],
        [0.50, 0.50, 0.00],
        [0.25, 0.25, 0.25],
        [0.25, 0.75, 0.75],
        [0.75, 0.25, 0.75],
        [0.75, 0.75, 0.25],
    ]
)

DEFAULT_SITE_CAP = 10**9
DEFAULT_EXCLUSION_THRESHOLD = 50.0


def n_cells_for(concentration_ppm: float, target_spin_count: int) -> int:
    """Cube size N_a such that 8 N_a^3 sites at f ppm hold about the target count."""
    return max(1, round((target_spin_count / (8.0 * concentration_ppm * 1e-6)) ** (1.0 / 3.0)))


def site_density_per_nm3() -> float:
    """Atom number density of diamond, nm^-3."""
    return 8.0 / CONSTANTS.lattice_constant**3


def mean_interspin_distance(concentration_ppm: float) -> float:
    """Mean inter-spin distance rbar = (3/(4 pi n))^(1/3) for the bath density n."""
    n = concentration_ppm * 1e-6 * site_density_per_nm3()
    return (3.0 / (4.0 * np.pi * n)) ** (1.0 / 3.0)


def typical_coupling(concentration_ppm: float) -> float:
    """Dipolar coupling magnitude at the mean inter-spin distance, rad/us."""
    return CONSTANTS.dipolar_prefactor / mean_interspin_distance(concentration_ppm) ** 3


@dataclass
class LatticeSpec:
    """Parameters of one random bath realization."""

    concentration_ppm: float
    target_spin_count: int = 80
    seed: int = 0
    n_cells_per_axis: int | None = None
    site_cap: int = DEFAULT_SITE_CAP
    exclusion_threshold: float = DEFAULT_EXCLUSION_THRESHOLD
    max_attempts: int = 10_000

    def __post_init__(self):
        if not 0.1 <= self.concentration_ppm <= 1000.0:
            raise ConfigError(
                f"concentration {self.concentration_ppm} ppm outside accepted range [0.1, 1000]"
            )
        if self.target_spin_count < 1:
            raise ConfigError("target_spin_count must be positive")
        derived = n_cells_for(self.concentration_ppm, self.target_spin_count)
        if self.n_cells_per_axis is None:
            self.n_cells_per_axis = derived
        else:
            implied = 8 * self.n_cells_per_axis**3 * self.concentration_ppm * 1e-6
            if abs(implied - self.target_spin_count) > max(1.0, 0.05 * self.target_spin_count):
                raise ConfigError(
                    f"n_cells_per_axis={self.n_cells_per_axis} implies {implied:.1f} spins, "
                    f"inconsistent with target {self.target_spin_count}"
                )
        n_sites = 8 * self.n_cells_per_axis**3
        if n_sites > self.site_cap:
            raise ConfigError(
                f"{n_sites} lattice sites exceed the cap {self.site_cap}: "
                "concentration/count combination infeasible"
            )
        if self.target_spin_count >= n_sites:
            raise ConfigError("target spin count exceeds available lattice sites")


@dataclass(eq=False)
class BathConfiguration:
    """One placed bath: geometry plus precomputed couplings.

    Treated as immutable after construction; safe to share between workers.
    """

    positions: np.ndarray                 # (J, 3) nm, central spin at origin
    jt_axes: list[str]                    # per-spin <111> delocalization axis
    couplings_system_bath: np.ndarray     # A_k, rad/us
    couplings_intra_bath: np.ndarray      # d_jk, rad/us, symmetric, zero diagonal
    b_rms: float                          # 0.5*sqrt(sum A^2), rad/us
    seed: int
    concentration_ppm: float
    n_cells_per_axis: int
    exclusion_threshold: float = DEFAULT_EXCLUSION_THRESHOLD
    n_rejected: int = 0
    format_version: int = field(default=FORMAT_VERSION)

    @property
    def n_spins(self) -> int:
        return len(self.positions)

    @property
    def t2_star_predicted(self) -> float:
        """Dephasing time sqrt(2)/b implied by the coupling set, us."""
        return float(np.sqrt(2.0) / self.b_rms)

    def validate(self):
        J = self.n_spins
        assert self.positions.shape == (J, 3)
        r = np.linalg.norm(self.positions, axis=1)
        if np.any(r == 0.0):
            raise ConfigError("bath spin at the origin")
        d = self.couplings_intra_bath
        assert d.shape == (J, J)
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0.0)
        b = couplings.bath_rms_b(self.couplings_system_bath)
        if abs(b - self.b_rms) > 1e-12 * max(b, 1.0):
            raise ConfigError("stored b_rms inconsistent with couplings")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "seed": self.seed,
            "concentration_ppm": self.concentration_ppm,
            "n_cells_per_axis": self.n_cells_per_axis,
            "exclusion_threshold": self.exclusion_threshold,
            "n_rejected": self.n_rejected,
            "b_rms": self.b_rms,
            "jt_axes": list(self.jt_axes),
            "positions_nm": self.positions.tolist(),
            "couplings_system_bath": self.couplings_system_bath.tolist(),
            "couplings_intra_bath": self.couplings_intra_bath.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BathConfiguration":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported bath file format_version {version!r}")
        config = cls(
            positions=np.asarray(data["positions_nm"], dtype=float),
            jt_axes=list(data["jt_axes"]),
            couplings_system_bath=np.asarray(data["couplings_system_bath"], dtype=float),
            couplings_intra_bath=np.asarray(data["couplings_intra_bath"], dtype=float),
            b_rms=float(data["b_rms"]),
            seed=int(data["seed"]),
            concentration_ppm=float(data["concentration_ppm"]),
            n_cells_per_axis=int(data["n_cells_per_axis"]),
            exclusion_threshold=float(data["exclusion_threshold"]),
            n_rejected=int(data["n_rejected"]),
        )
        config.validate()
        return config


def save_bath(config: BathConfiguration, path: str | Path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True))


def load_bath(path: str | Path) -> BathConfiguration:
    return BathConfiguration.from_dict(json.loads(Path(path).read_text()))


def generate_diamond_sites(n_cells_per_axis: int, site_cap: int = DEFAULT_SITE_CAP) -> np.ndarray:
    """All 8 N_a^3 diamond lattice sites of the cube, nm, a site at the origin.

    Every coordinate is an integer multiple of a/4.  Intended for small to
    moderate N_a; rejects site counts above `site_cap`.
    """
    if n_cells_per_axis < 1:
        raise ConfigError("n_cells_per_axis must be >= 1")
    n_sites = 8 * n_cells_per_axis**3
    if n_sites > site_cap:
        raise ConfigError(f"{n_sites} sites exceed cap {site_cap}")
    a = CONSTANTS.lattice_constant
    idx = np.arange(n_cells_per_axis)
    cells = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = (cells[:, None, :] + _BASIS[None, :, :]).reshape(-1, 3) * a
    center = n_cells_per_axis // 2
    return sites - a * center


def _positions_from_indices(indices: np.ndarray, n_cells_per_axis: int) -> np.ndarray:
    """Site positions (nm) for linear site indices cell*8 + basis, lazily."""
    a = CONSTANTS.lattice_constant
    basis = indices % 8
    cell = indices // 8
    iz = cell % n_cells_per_axis
    iy = (cell // n_cells_per_axis) % n_cells_per_axis
    ix = cell // (n_cells_per_axis * n_cells_per_axis)
    frac = np.stack([ix, iy, iz], axis=1).astype(float) + _BASIS[basis]
    center = n_cells_per_axis // 2
    return a * frac - a * center


def _origin_site_index(n_cells_per_axis: int) -> int:
    c = n_cells_per_axis // 2
    cell = (c * n_cells_per_axis + c) * n_cells_per_axis + c
    return cell * 8  # basis 0 of the center cell


def _sample_site_indices(spec: LatticeSpec, rng: np.random.Generator) -> np.ndarray:
    """Distinct site indices, uniform over the cube, excluding the origin site.

    Sampling by rejection keeps memory O(target) even when the cube holds
    ~1e8 sites (low concentrations); duplicate draws are discarded in draw
    order, which preserves uniformity of the resulting set.
    """
    n_sites = 8 * spec.n_cells_per_axis**3
    origin = _origin_site_index(spec.n_cells_per_axis)
    chosen: list[int] = []
    seen = {origin}
    while len(chosen) < spec.target_spin_count:
        draw = rng.integers(0, n_sites, size=2 * spec.target_spin_count)
        for s in draw:
            s = int(s)
            if s not in seen:
                seen.add(s)
                chosen.append(s)
                if len(chosen) == spec.target_spin_count:
                    break
    return np.array(chosen, dtype=np.int64)


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    max_ratio: float
    typical_coupling: float


def filter_configuration(
    config: BathConfiguration, ratio_threshold: float = DEFAULT_EXCLUSION_THRESHOLD
) -> FilterDecision:
    """Exclusion rule: reject baths with any anomalously strong coupling.

    The typical coupling strength is the dipolar coupling magnitude at the
    mean inter-spin distance for the bath density; both intra-bath pairs
    and the central-spin couplings are checked against
    ratio_threshold * typical.
    """
    typical = typical_coupling(config.concentration_ppm)
    max_a = float(np.max(np.abs(config.couplings_system_bath)))
    d = config.couplings_intra_bath
    max_d = float(np.max(np.abs(d))) if d.size else 0.0
    max_ratio = max(max_a, max_d) / typical
    return FilterDecision(max_ratio <= ratio_threshold, max_ratio, typical)


def _build_configuration(
    spec: LatticeSpec, rng: np.random.Generator, n_rejected: int
) -> BathConfiguration:
    indices = _sample_site_indices(spec, rng)
    positions = _positions_from_indices(indices, spec.n_cells_per_axis)
    axes = [JT_AXES[i] for i in rng.integers(0, 4, size=spec.target_spin_count)]
    a_k = couplings.system_bath_couplings(positions)
    d_jk = couplings.intra_bath_matrix(positions)
    return BathConfiguration(
        positions=positions,
        jt_axes=axes,
        couplings_system_bath=a_k,
        couplings_intra_bath=d_jk,
        b_rms=couplings.bath_rms_b(a_k),
        seed=spec.seed,
        concentration_ppm=spec.concentration_ppm,
        n_cells_per_axis=spec.n_cells_per_axis,
        exclusion_threshold=spec.exclusion_threshold,
        n_rejected=n_rejected,
    )


def place_bath_spins(spec: LatticeSpec) -> BathConfiguration:
    """Sample bath configurations until one passes the exclusion rule.

    Deterministic for a fixed spec.seed: the rejection loop consumes a
    single RNG stream.  The number of rejected draws is recorded on the
    returned configuration.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    for attempt in range(spec.max_attempts):
        config = _build_configuration(spec, rng, n_rejected=attempt)
        if filter_configuration(config, spec.exclusion_threshold).accepted:
            return config
    raise ConfigError(
        f"no acceptable configuration in {spec.max_attempts} attempts "
        f"(f={spec.concentration_ppm} ppm, threshold={spec.exclusion_threshold})"
    )
