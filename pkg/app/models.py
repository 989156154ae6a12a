"""Domain types for the partial-identification engine.

Cell-level parameters are always held in cell order: x ascending, then z,
i.e. (0,0), (0,1), (1,0), (1,1). Arrays of draws follow the same order on
their cell axis.
"""
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd

from app.middleware import (
    COUNTS_COLUMNS,
    handle_validation_errors,
    validate_assumption_data,
    validate_dgp_data,
    validate_gibbs_data,
    validate_levels,
    validate_seed,
)

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, order=True)
class CellIndex:
    """One (x, z) cell of the 2x2 design"""
    x: int
    z: int

    def __post_init__(self):
        if self.x not in (0, 1) or self.z not in (0, 1):
            raise ValueError(f"Cell labels must be binary, got ({self.x}, {self.z})")

    @property
    def position(self):
        return 2 * self.x + self.z

    @property
    def label(self):
        return f"{self.x}{self.z}"

    def __repr__(self):
        return f'<Cell {self.label}>'


CELLS = tuple(CellIndex(x, z) for x in (0, 1) for z in (0, 1))


@dataclass(frozen=True)
class ObservedCellParams:
    """Observed-data probabilities of one cell: (Y=0,R=1), (Y=1,R=1), R=0"""
    q10: float
    q11: float
    q0dot: float

    def __post_init__(self):
        values = (self.q10, self.q11, self.q0dot)
        if not all(0.0 <= v <= 1.0 for v in values):
            raise ValueError(f"Cell probabilities must lie in [0, 1], got {values}")
        if abs(sum(values) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"Cell probabilities must sum to 1, got {sum(values)}")

    @classmethod
    def from_counts(cls, n10, n11, n0dot):
        total = n10 + n11 + n0dot
        if total == 0:
            raise ValueError("Cannot form probabilities from an empty cell")
        q10, q11 = n10 / total, n11 / total
        return cls(q10, q11, 1.0 - q10 - q11)

    @property
    def observed_rate(self):
        """P(Y=1 | R=1) in this cell, 0 when nothing is observed"""
        seen = self.q10 + self.q11
        return self.q11 / seen if seen > 0 else 0.0

    def as_array(self):
        return np.array([self.q10, self.q11, self.q0dot])

    def to_dict(self):
        return {'q10': self.q10, 'q11': self.q11, 'q0dot': self.q0dot}


@dataclass(frozen=True)
class MissingCellParam:
    """P(Y=1) among the missing rows of one cell"""
    omega: float

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"Omega must lie in [0, 1], got {self.omega}")


@dataclass(frozen=True)
class CellParams:
    index: CellIndex
    q: ObservedCellParams
    omega: MissingCellParam

    @property
    def p_y1(self):
        """P(Y=1 | x, z)"""
        return self.q.q11 + self.q.q0dot * self.omega.omega

    def joint(self):
        """Full joint (R=1,Y=0), (R=1,Y=1), (R=0,Y=0), (R=0,Y=1)"""
        q, w = self.q, self.omega.omega
        return (q.q10, q.q11, q.q0dot * (1.0 - w), q.q0dot * w)

    @classmethod
    def from_joint(cls, index, p, default_omega=0.5):
        """Inverse of `joint`. Omega is unidentified without missing mass."""
        p10, p11, p00, p01 = p
        q0dot = p00 + p01
        omega = p01 / q0dot if q0dot > 0 else default_omega
        return cls(index, ObservedCellParams(p10, p11, 1.0 - p10 - p11), MissingCellParam(omega))

    def to_dict(self):
        return {'x': self.index.x, 'z': self.index.z, **self.q.to_dict(), 'omega': self.omega.omega}


@dataclass(frozen=True)
class CountsTable:
    """Observed counts per cell: (n10, n11, n0dot) in cell order"""
    cells: tuple
    zcounts: tuple = None

    def __post_init__(self):
        cells = tuple(tuple(int(n) for n in cell) for cell in self.cells)
        if len(cells) != 4 or any(len(cell) != 3 for cell in cells):
            raise ValueError("Counts need four cells of three counts each")
        if any(n < 0 for cell in cells for n in cell):
            raise ValueError("Counts must be non-negative")
        object.__setattr__(self, 'cells', cells)

        derived = (sum(cells[0]) + sum(cells[2]), sum(cells[1]) + sum(cells[3]))
        zcounts = derived if self.zcounts is None else tuple(int(n) for n in self.zcounts)
        if zcounts != derived:
            raise ValueError(f"Z margin {zcounts} disagrees with cell totals {derived}")
        object.__setattr__(self, 'zcounts', zcounts)

    @classmethod
    def from_array(cls, array):
        return cls(tuple(map(tuple, np.asarray(array, dtype=np.int64).reshape(4, 3))))

    @classmethod
    def zeros(cls):
        return cls(((0, 0, 0),) * 4)

    @property
    def array(self):
        return np.array(self.cells, dtype=np.int64)

    @property
    def n(self):
        return sum(self.zcounts)

    def observed_params(self):
        """Point estimates of the observed-data probabilities per cell"""
        return tuple(ObservedCellParams.from_counts(*cell) for cell in self.cells)

    def to_frame(self):
        records = [[c.x, c.z, *cell] for c, cell in zip(CELLS, self.cells)]
        return pd.DataFrame(records, columns=COUNTS_COLUMNS)

    def to_dict(self):
        return {
            'cells': {c.label: list(cell) for c, cell in zip(CELLS, self.cells)},
            'zcounts': list(self.zcounts),
            'n': self.n,
        }


@dataclass(frozen=True)
class DirichletHyper:
    """Pseudo-counts for (q10, q11, q0dot); omega stays Uniform(0, 1) on top"""
    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.0

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0 and self.a3 > 0):
            raise ValueError(f"Dirichlet pseudo-counts must be positive, got {self.as_tuple()}")

    def as_tuple(self):
        return (self.a1, self.a2, self.a3)

    def as_array(self):
        return np.array(self.as_tuple(), dtype=float)


@dataclass(frozen=True)
class ZMarginParam:
    qz: float

    def __post_init__(self):
        if not 0.0 <= self.qz <= 1.0:
            raise ValueError(f"qz must lie in [0, 1], got {self.qz}")


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """Accepted draws of the observed and missing-data parameters.

    q has shape (n, 4, 3), omega (n, 4) and qz (n,).
    """
    q: np.ndarray
    omega: np.ndarray
    qz: np.ndarray
    accepted: int
    attempted: int
    seed: int
    stratum_accepted: tuple = None
    stratum_attempted: tuple = None

    def __post_init__(self):
        n = len(self.q)
        if self.q.shape != (n, 4, 3) or self.omega.shape != (n, 4) or self.qz.shape != (n,):
            raise ValueError("Draw arrays have inconsistent shapes")
        if self.accepted != n:
            raise ValueError(f"accepted={self.accepted} but {n} draws are held")
        if self.accepted > self.attempted:
            raise ValueError("accepted cannot exceed attempted")

    def __len__(self):
        return self.accepted

    @property
    def acceptance_rate(self):
        return self.accepted / self.attempted if self.attempted else 0.0

    def psi(self):
        from app.saturated import psi_array
        return psi_array(self.q, self.omega, self.qz)

    def cells(self, i):
        return tuple(
            CellParams(c, ObservedCellParams(*self.q[i, c.position]), MissingCellParam(self.omega[i, c.position]))
            for c in CELLS
        )

    def to_frame(self):
        """Export layout: draw, psi, q per cell, omega per cell, qz"""
        columns = {'draw': np.arange(self.accepted), 'psi': self.psi()}
        for c in CELLS:
            for k, suffix in enumerate(('10', '11', '0dot')):
                columns[f'q{c.label}_{suffix}'] = self.q[:, c.position, k]
        for c in CELLS:
            columns[f'omega_{c.label}'] = self.omega[:, c.position]
        columns['qz'] = self.qz
        return pd.DataFrame(columns)


@dataclass(frozen=True)
class IntervalSummary:
    mean: float
    lower: float
    upper: float
    level: float

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value):
        return self.lower <= value <= self.upper

    def to_dict(self):
        return {'level': self.level, 'lo': self.lower, 'mean': self.mean, 'hi': self.upper}


@dataclass(frozen=True)
class AssumptionSpec:
    """Restriction set imposed on the saturated prior.

    Only the parameters relevant to `kind` matter, but all are part of the
    identity (and the prior acceptance-rate cache key).
    """
    kind: str = 'None'
    t_l: float = 2.0 / 3.0
    t_h: float = 1.5
    sigma: float = 0.4
    a: float = 4.0
    b: float = 2.0
    hyper: DirichletHyper = field(default_factory=DirichletHyper)

    def __post_init__(self):
        handle_validation_errors(validate_assumption_data(self.to_config_dict()))

    @classmethod
    def from_config(cls, section):
        """Build from a flat key-value mapping (strings or numbers)"""
        defaults = cls()
        hyper = DirichletHyper(
            float(section.get('alpha1', defaults.hyper.a1)),
            float(section.get('alpha2', defaults.hyper.a2)),
            float(section.get('alpha3', defaults.hyper.a3)),
        )
        return cls(
            kind=str(section.get('kind', defaults.kind)),
            t_l=float(section.get('t_l', defaults.t_l)),
            t_h=float(section.get('t_h', defaults.t_h)),
            sigma=float(section.get('sigma', defaults.sigma)),
            a=float(section.get('a', defaults.a)),
            b=float(section.get('b', defaults.b)),
            hyper=hyper,
        )

    def with_alpha3(self, alpha3):
        return replace(self, hyper=replace(self.hyper, a3=float(alpha3)))

    def to_config_dict(self):
        return {
            'kind': self.kind, 't_l': self.t_l, 't_h': self.t_h, 'sigma': self.sigma,
            'a': self.a, 'b': self.b,
            'alpha1': self.hyper.a1, 'alpha2': self.hyper.a2, 'alpha3': self.hyper.a3,
        }

    def __repr__(self):
        return f'<AssumptionSpec {self.kind}>'


@dataclass(frozen=True)
class OmegaInterval:
    lo: float
    hi: float
    feasible: bool = True

    @classmethod
    def infeasible(cls):
        return cls(math.nan, math.nan, False)

    @classmethod
    def clipped(cls, lo, hi):
        lo, hi = max(0.0, float(lo)), min(1.0, float(hi))
        if not lo <= hi:
            return cls.infeasible()
        return cls(lo, hi)

    def contains(self, omega, tolerance=0.0):
        return self.feasible and self.lo - tolerance <= omega <= self.hi + tolerance

    def to_dict(self):
        if not self.feasible:
            return {'feasible': False}
        return {'feasible': True, 'lo': self.lo, 'hi': self.hi}

    def __str__(self):
        return f"[{self.lo:.4f}, {self.hi:.4f}]" if self.feasible else 'Infeasible'


@dataclass(frozen=True)
class AttemptBudget:
    required: int
    max_attempts: int
    bf_fail_threshold: float = 10.0

    def __post_init__(self):
        if self.required < 1:
            raise ValueError("At least one accepted draw is required")
        if self.max_attempts < self.required:
            raise ValueError("max_attempts cannot be below the required draws")

    @classmethod
    def from_prior_rate(cls, required, prior_rate, bf_fail_threshold=10.0, cap=10 ** 8):
        """Budget at which a shortfall means BF > bf_fail_threshold"""
        if prior_rate <= 0:
            return cls(required, cap, bf_fail_threshold)
        attempts = math.ceil(required / prior_rate * bf_fail_threshold)
        return cls(required, max(required, min(attempts, cap)), bf_fail_threshold)


@dataclass(frozen=True)
class AcceptanceRate:
    rate: float
    se: float
    accepted: int
    attempted: int

    @classmethod
    def binomial(cls, accepted, attempted):
        rate = accepted / attempted if attempted else 0.0
        se = math.sqrt(rate * (1.0 - rate) / attempted) if attempted else 0.0
        return cls(rate, se, int(accepted), int(attempted))


@dataclass(frozen=True)
class AcceptanceReport:
    spec: AssumptionSpec
    prior_ar: float
    prior_ar_se: float
    posterior_ar: float
    posterior_ar_se: float
    bayes_factor: float
    bayes_factor_se: float
    computed: bool

    def to_dict(self):
        return {
            'kind': self.spec.kind,
            'prior_ar': self.prior_ar,
            'prior_ar_se': self.prior_ar_se,
            'posterior_ar': self.posterior_ar,
            'posterior_ar_se': self.posterior_ar_se,
            'bf': self.bayes_factor,
            'bf_se': self.bayes_factor_se,
            'computed': self.computed,
        }


@dataclass(frozen=True)
class HeckmanParams:
    gamma: tuple = (0.0, 0.0, 0.0)
    beta: tuple = (0.0, 0.0)
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'gamma', tuple(float(g) for g in self.gamma))
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))
        if len(self.gamma) != 3 or len(self.beta) != 2:
            raise ValueError("gamma needs 3 coefficients and beta 2")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")

    def to_dict(self):
        return {
            'gamma0': self.gamma[0], 'gamma1': self.gamma[1], 'gamma2': self.gamma[2],
            'beta0': self.beta[0], 'beta1': self.beta[1], 'rho': self.rho,
        }


@dataclass(frozen=True, eq=False)
class HeckmanState:
    """Parameters plus the latent selection (all units) and outcome (observed units)"""
    params: HeckmanParams
    rstar: np.ndarray
    ystar: np.ndarray


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 5000
    burn_in: int = 1000
    prior_mean_b1: tuple = (0.0, 0.0, 0.0)
    prior_cov_B1: tuple = ((10.0, 0.0, 0.0), (0.0, 10.0, 0.0), (0.0, 0.0, 10.0))
    prior_mean_b2: tuple = (0.0, 0.0)
    prior_cov_B2: tuple = ((10.0, 0.0), (0.0, 10.0))
    mh_sd: float = 0.05

    def __post_init__(self):
        handle_validation_errors(validate_gibbs_data({
            'iterations': self.iterations, 'burn_in': self.burn_in, 'mh_sd': self.mh_sd,
        }))
        for name, dim in (('prior_cov_B1', 3), ('prior_cov_B2', 2)):
            cov = np.asarray(getattr(self, name), dtype=float)
            if cov.shape != (dim, dim) or not np.allclose(cov, cov.T):
                raise ValueError(f"{name} must be a symmetric {dim}x{dim} matrix")
            if np.any(np.linalg.eigvalsh(cov) <= 0):
                raise ValueError(f"{name} must be positive definite")

    @classmethod
    def from_config(cls, section):
        defaults = cls()
        return cls(
            iterations=int(section.get('iterations', defaults.iterations)),
            burn_in=int(section.get('burn_in', defaults.burn_in)),
            mh_sd=float(section.get('mh_sd', defaults.mh_sd)),
            prior_cov_B1=tuple(map(tuple, float(section.get('prior_var', 10.0)) * np.eye(3))),
            prior_cov_B2=tuple(map(tuple, float(section.get('prior_var', 10.0)) * np.eye(2))),
        )

    @property
    def kept(self):
        return self.iterations - self.burn_in


@dataclass(frozen=True, eq=False)
class HeckmanChain:
    """Post-burn-in draws of the selection model"""
    gamma: np.ndarray
    beta: np.ndarray
    rho: np.ndarray
    psi: np.ndarray
    rho_acceptance: float
    seed: int
    burn_in: int

    def __len__(self):
        return len(self.psi)

    def to_frame(self):
        return pd.DataFrame({
            'iter': np.arange(self.burn_in, self.burn_in + len(self)),
            'gamma0': self.gamma[:, 0], 'gamma1': self.gamma[:, 1], 'gamma2': self.gamma[:, 2],
            'beta0': self.beta[:, 0], 'beta1': self.beta[:, 1],
            'rho': self.rho, 'psi': self.psi,
        })


@dataclass(frozen=True)
class ModelSpec:
    """One model of an analysis or study: an assumption kind, Heckman, MAR or Oracle"""
    label: str
    kind: str
    assumption: AssumptionSpec = None
    gibbs: GibbsConfig = None

    @property
    def uses_rejection(self):
        return self.assumption is not None


@dataclass(frozen=True)
class DgpSpec:
    kind: str = 'HeckmanDGP'
    target_missing: float = 0.2
    iv_holds: bool = True
    bias_direction: str = 'positive'
    beta0: float = -0.5
    beta1: float = 0.75
    beta2: float = 1.5
    rho: float = -0.5
    gamma1: float = 0.3
    gamma2: float = 0.7
    n: int = 1000
    iv_margin: float = 0.2

    def __post_init__(self):
        handle_validation_errors(validate_dgp_data({f.name: getattr(self, f.name) for f in fields(self)}))

    @property
    def effective_beta2(self):
        return 0.0 if self.iv_holds else self.beta2

    @property
    def effective_rho(self):
        """Negative latent correlation yields positive missing-data bias"""
        magnitude = abs(self.rho)
        return -magnitude if self.bias_direction == 'positive' else magnitude

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ModelOutcome:
    """One model's result on one replicate"""
    label: str
    computed: bool
    covered: bool = None
    width: float = None
    ar: float = None
    bf: float = None

    def to_dict(self):
        return {
            'model': self.label, 'computed': self.computed, 'covered': self.covered,
            'width': self.width, 'ar': self.ar, 'bf': self.bf,
        }


@dataclass(frozen=True)
class ReplicationResult:
    replicate: int
    seed: int
    truth: float
    outcomes: tuple

    def to_records(self):
        return [{'replicate': self.replicate, 'seed': self.seed, 'truth': self.truth, **o.to_dict()}
                for o in self.outcomes]


@dataclass(frozen=True)
class AnalysisConfig:
    input_path: str
    models: tuple
    draws: int = 1000
    seed: int = 20240917
    levels: tuple = (0.80, 0.95)
    output_dir: str = 'output'
    qz: float = None

    def __post_init__(self):
        errors = validate_levels(self.levels)
        errors += validate_seed(self.seed)
        if not self.models:
            errors.append("At least one model is required")
        if self.draws < 1:
            errors.append("Draws must be at least 1")
        handle_validation_errors(errors)
        object.__setattr__(self, 'levels', tuple(sorted(self.levels)))


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpSpec
    models: tuple
    replicates: int = 50
    seed: int = 20240917
    draws: int = 1000
    level: float = 0.90

    def __post_init__(self):
        errors = validate_levels([self.level])
        errors += validate_seed(self.seed)
        if not self.models:
            errors.append("At least one model is required")
        if self.replicates < 1:
            errors.append("Replicates must be at least 1")
        if self.draws < 1:
            errors.append("Draws must be at least 1")
        handle_validation_errors(errors)


@dataclass(frozen=True)
class ModelReport:
    label: str
    kind: str
    computed: bool
    intervals: tuple = ()
    mean: float = None
    prob_positive: float = None
    acceptance: AcceptanceReport = None

    def to_dict(self):
        return {
            'model': self.label,
            'kind': self.kind,
            'computed': self.computed,
            'mean': self.mean,
            'prob_positive': self.prob_positive,
            'intervals': [i.to_dict() for i in self.intervals],
            'acceptance': self.acceptance.to_dict() if self.acceptance else None,
        }


@dataclass(frozen=True)
class AnalysisReport:
    models: tuple
    counts: CountsTable
    seed: int

    def model(self, label):
        return next(m for m in self.models if m.label == label)

    def interval_frame(self):
        records = [
            {'model': m.label, 'level': i.level, 'lo': i.lower, 'mean': i.mean, 'hi': i.upper}
            for m in self.models for i in m.intervals
        ]
        return pd.DataFrame(records, columns=['model', 'level', 'lo', 'mean', 'hi'])

    def to_dict(self):
        return {
            'seed': self.seed,
            'counts': self.counts.to_dict(),
            'models': [m.to_dict() for m in self.models],
        }
