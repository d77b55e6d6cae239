"""Named verification experiments.

Every experiment returns a :class:`VerificationReport`. Exact suites compare
truncated series with closed forms; Monte Carlo suites compare empirical
laws with exact limit laws in total variation, on states ``0..cap`` with
everything above the cap pooled in one extra state.
"""
import logging
import math
import time
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .. import __version__
from ..core.environment import (
    asymptotic_scaling,
    condition_diagnostics,
    cumulative_mean,
    scaling_A,
    scaling_table,
)
from ..core.exact import ExactEngine, scaled_checkpoints
from ..core.series import TruncatedSeries, evaluate, lf_apply, lf_eval, lf_gf, power
from ..errors import ConfigurationError, GridError
from ..schemas import CheckRecord, ReportMetadata, ScenarioConfig, VerificationReport
from ..sim.discrete import ConditionedSampler, PathBatch, simulate_Y_batch
from ..sim.limit import (
    LimitSpec,
    W_transition_gf,
    W_transition_pmf,
    conditioned_kernel,
    draw_stationary,
    entrance_law,
    generator_a,
    generator_b,
    log_fY,
    quasi_stationary_pmf,
    reverse_marginals,
    reversed_kernel,
    sample_U_conditioned_batch,
    sample_W_batch,
    sample_Z_batch,
    stationary_fY,
    survival_from_geom,
)
from ..sim.streams import SeededStream, batch_sizes, run_batches
from ..stats import joint_pmf_from_kernels, kernel_matrix, marginalize, total_variation
from .utils import exact_check, pmf_table, scalar_check, tv_check

logger = logging.getLogger(__name__)

EXPERIMENTS = ('yaglom', 'fdd', 'entrance', 'theorem2', 'reverse', 'diag')

# Disjoint replicate-index ranges per Monte Carlo stage
STREAM_BLOCK = 2 ** 32
BLOCKS = {'conditioned': 0, 'z': 1, 'u': 2, 'y': 3, 'w': 4, 'reverse_x': 5, 'reverse_y': 6}

KERNEL_FLOOR = 1e-18
FINITE_DIFFERENCE_STEP = 1e-4


def _stream(seed: int, block: str, index: int) -> SeededStream:
    return SeededStream(scenario_seed=seed, replicate_index=BLOCKS[block] * STREAM_BLOCK + index)


def _conditioned_task(sampler: ConditionedSampler, seed: int, block: str, sizes: List[int], index: int) -> PathBatch:
    return sampler.sample(_stream(seed, block, index), sizes[index])


def _immigration_task(spec, n: int, times: Tuple[float, ...], seed: int, block: str, sizes: List[int],
                      index: int) -> PathBatch:
    return simulate_Y_batch(spec, n, times, _stream(seed, block, index), sizes[index])


def _entrance_task(limit: LimitSpec, eps: float, inner: Tuple[float, ...], outer: Tuple[float, ...],
                   seed: int, sizes: List[int], index: int) -> PathBatch:
    batch, _ = sample_U_conditioned_batch(limit, eps, inner, outer, _stream(seed, 'u', index), sizes[index])
    return batch


def _z_task(limit: LimitSpec, t: float, seed: int, sizes: List[int], index: int) -> np.ndarray:
    rng = _stream(seed, 'z', index).generator()
    return sample_Z_batch(limit, np.ones(sizes[index], dtype=np.int64), [0.0, t], rng)[:, 0]


def _w_task(limit: LimitSpec, times: Tuple[float, ...], order: int, seed: int, sizes: List[int],
            index: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = _stream(seed, 'w', index).generator()
    counts = np.zeros(3, dtype=np.int64)
    start = draw_stationary(limit, sizes[index], rng, order)
    states = sample_W_batch(limit, start, (0.0,) + times, rng, counts)
    return states, counts


def pooled(law, cap: int) -> np.ndarray:
    """Pmf on 0..cap with the remaining mass (tail included) in state cap+1."""
    vec = law.pmf_vector() if isinstance(law, TruncatedSeries) else np.asarray(law, dtype=float).ravel()
    out = np.zeros(cap + 2)
    head = vec[:cap + 1]
    out[:head.size] = head
    out[cap + 1] = max(0.0, 1.0 - math.fsum(head))
    return out


class ExperimentRunner:
    """Runs the verification experiments of one scenario."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.spec = config.spec
        self.order = config.grid.truncation
        self.cap = config.limit.kernel_cap
        self.tol = config.tolerances
        try:
            self.limit = LimitSpec.from_environment(self.spec)
        except ValidationError as e:
            raise ConfigurationError(f"scenario '{config.name}' has no valid limit process: {e}") from e
        self._engine: Optional[ExactEngine] = None
        logger.info(f"Runner ready for scenario '{config.name}' (nu={self.spec.nu}, order={self.order})")

    def checkpoints(self) -> List[int]:
        """Generations the experiments query: the n_mc grid plus A(n) and A(n eps) per n."""
        grid = self.config.grid
        points = set(scaled_checkpoints(self.spec, grid.n_mc, grid.times))
        for n in grid.n_values:
            points.add(scaling_A(self.spec, n))
            points.add(scaling_A(self.spec, max(1, math.floor(n * self.config.limit.eps))))
        return sorted(points)

    @property
    def engine(self) -> ExactEngine:
        if self._engine is None:
            self._engine = ExactEngine(self.spec, self.order, self.checkpoints())
        return self._engine

    # Report plumbing

    def _report(self, experiment: str) -> VerificationReport:
        metadata = ReportMetadata(
            scenario=self.config.name,
            seed=self.config.mc.seed,
            config_hash=self.config.config_hash(),
            version=__version__,
            truncation=self.order,
            n_mc=self.config.grid.n_mc,
        )
        return VerificationReport(experiment=experiment, metadata=metadata)

    @staticmethod
    def _add(report: VerificationReport, check: CheckRecord, started: float) -> CheckRecord:
        check = check.model_copy(update={'runtime_s': round(time.perf_counter() - started, 6)})
        report.checks.append(check)
        if check.passed:
            logger.debug(f"{report.experiment}/{check.name}: {check.value:.3e} <= {check.tolerance:.1e}")
        else:
            logger.warning(f"{report.experiment}/{check.name} failed: {check.value:.3e} > {check.tolerance:.1e}")
        return check

    def _sizes(self, total: int) -> List[int]:
        return batch_sizes(total, self.config.mc.batch_size)

    def _run(self, task: Callable, sizes: List[int]) -> list:
        return run_batches(task, len(sizes), self.config.mc.workers)

    # Exact limit laws

    def _limit_kernel(self, u: float, t: float) -> np.ndarray:
        """Transition matrix of the limit process from scaled time u to t on 0..cap."""
        if t <= 1.0:
            def row(x: int):
                if x == 0:
                    return TruncatedSeries.point_mass(0, self.order)
                return conditioned_kernel(self.limit, u, t, x, self.order)
            return kernel_matrix(row, self.cap)
        if u >= 1.0:
            step = lf_gf(self.limit.ratio_params(u / t), self.order)
            return kernel_matrix(lambda x: power(step, x), self.cap)
        return self._limit_kernel(u, 1.0) @ self._limit_kernel(1.0, t)

    def _entrance_initial(self, t: float) -> TruncatedSeries:
        if math.isclose(t, 1.0):
            return quasi_stationary_pmf(self.limit, self.order)
        return entrance_law(self.limit, t, self.order)

    def limit_joint_X(self, times: Sequence[float]) -> np.ndarray:
        """Joint law of the conditioned limit on ``times`` (first time at most 1)."""
        times = [float(t) for t in times]
        if times[0] > 1.0:
            raise GridError(f"the conditioned limit starts at a time <= 1, got {times[0]}")
        kernels = [self._limit_kernel(u, t) for u, t in zip(times, times[1:])]
        return self._joint(self._entrance_initial(times[0]), kernels)

    def limit_joint_Y(self, times: Sequence[float]) -> np.ndarray:
        """Joint law of the stationary W at ``log t`` for t in ``times``."""
        times = [float(t) for t in times]
        kernels = [
            kernel_matrix(lambda y, d=math.log(t / u): W_transition_pmf(self.limit, y, d, self.order), self.cap)
            for u, t in zip(times, times[1:])
        ]
        return self._joint(stationary_fY(self.limit, self.order), kernels)

    def _joint(self, initial: TruncatedSeries, kernels: List[np.ndarray]) -> np.ndarray:
        try:
            return joint_pmf_from_kernels(initial, kernels, self.cap)
        except ValueError as e:
            raise ConfigurationError(f"kernel_cap = {self.cap} is too small: {e}") from e

    def push_entrance(self, u: float, t: float) -> np.ndarray:
        """g_u pushed through the conditioned kernel from u to t."""
        start = entrance_law(self.limit, u, self.order).coeffs
        out = np.zeros(self.order + 1)
        for x in np.flatnonzero(start > KERNEL_FLOOR):
            out += start[x] * conditioned_kernel(self.limit, u, t, int(x), self.order).coeffs
        return out

    def _require_immigration(self, experiment: str) -> None:
        if not (self.spec.has_immigration and self.limit.has_immigration):
            raise ConfigurationError(f"experiment '{experiment}' needs an immigration law")

    # Experiments

    def run_yaglom(self) -> VerificationReport:
        """Conditional law of X_{A(n)} given survival against Geom(p), plus survival scaling."""
        report = self._report('yaglom')
        geom = quasi_stationary_pmf(self.limit, self.order)
        n_values = self.config.grid.n_values
        distances = []
        for n in n_values:
            started = time.perf_counter()
            generation = scaling_A(self.spec, n)
            conditional = self.engine.conditional_pmf_survival(generation)
            last = n == n_values[-1]
            check = self._add(report, tv_check(
                f"yaglom_tv_n{n}", conditional.pmf_vector(), geom.pmf_vector(),
                self.tol.yaglom if last else 1.0, tail_mass=conditional.tail_mass, n=n, generation=generation,
            ), started)
            distances.append(check.value)
            if last:
                report.tables.append(pmf_table(f"yaglom_n{n}", self.cap, exact=conditional.coeffs, limit=geom.coeffs))

        started = time.perf_counter()
        rise = max((b - a for a, b in zip(distances, distances[1:])), default=0.0)
        self._add(report, scalar_check('yaglom_monotone', max(rise, 0.0), 0.0,
                                       1e-10 + 0.05 * max(distances), distances=distances), started)

        n = n_values[-1]
        started = time.perf_counter()
        scaled = n * self.engine.survival_probability(scaling_A(self.spec, n))
        self._add(report, scalar_check('survival_scaling', scaled, self.limit.p, self.tol.survival,
                                       relative=True, n=n), started)

        eps = self.config.limit.eps
        started = time.perf_counter()
        j = scaling_A(self.spec, max(1, math.floor(n * eps)))
        conditional_mean = self.engine.conditional_mean_X(j, scaling_A(self.spec, n))
        self._add(report, scalar_check('conditional_mean', conditional_mean, eps / self.limit.p,
                                       self.tol.mean, relative=True, n=n, eps=eps), started)
        return report

    def run_entrance_law(self) -> VerificationReport:
        """Exact identities of the entrance law, the kernels and the limit generators."""
        report = self._report('entrance')
        eps = self.config.limit.eps
        geom = quasi_stationary_pmf(self.limit, self.order)

        for t in self.config.grid.times:
            if not eps < t <= 1.0:
                continue
            started = time.perf_counter()
            pushed = self.push_entrance(eps, t)
            target = entrance_law(self.limit, t, self.order)
            residual = float(np.abs(pushed - target.coeffs).max())
            self._add(report, exact_check(f"entrance_push_t{t:g}", residual, self.tol.exact,
                                          tail_mass=target.tail_mass, eps=eps), started)
            report.tables.append(pmf_table(f"entrance_t{t:g}", self.cap, exact=pushed, limit=target.coeffs))

        started = time.perf_counter()
        windows = np.round(np.arange(1, 11) / 10.0, 10)
        gap = max(abs(survival_from_geom(self.limit, float(e)) - e) for e in windows)
        self._add(report, exact_check('survival_from_geom', gap, self.tol.identity), started)

        if eps < 1.0:
            started = time.perf_counter()
            middle = 0.5 * (eps + 1.0)
            rows = range(1, 9)
            first = np.array([conditioned_kernel(self.limit, eps, middle, x, self.order).coeffs for x in rows])
            second = np.zeros((self.order + 1, self.order + 1))
            for y in range(1, self.order + 1):
                second[y] = conditioned_kernel(self.limit, middle, 1.0, y, self.order).coeffs
            direct = np.array([conditioned_kernel(self.limit, eps, 1.0, x, self.order).coeffs for x in rows])
            residual = float(np.abs(first @ second - direct)[:, :self.cap + 1].max())
            self._add(report, exact_check('chapman_kolmogorov', residual, self.tol.exact,
                                          times=[eps, middle, 1.0]), started)

        started = time.perf_counter()
        a_grid = np.linspace(0.01, 1.0, 100)
        s_grid = np.linspace(0.0, 0.99, 100)
        worst = 0.0
        p, q = self.limit.p, self.limit.q
        for a in a_grid:
            h = lf_eval(self.limit.ratio_params(float(a)), s_grid)
            lhs = p * h / (1.0 - q * h)
            rhs = 1.0 - a * (1.0 + 0.5 * self.limit.nu) / (1.0 / (1.0 - s_grid) + 0.5 * self.limit.nu)
            worst = max(worst, float(np.abs(lhs - rhs).max()))
        self._add(report, exact_check('geometric_mixture_identity', worst, self.tol.identity), started)

        started = time.perf_counter()
        rng = np.random.default_rng(self.config.mc.seed)
        worst = 0.0
        for a, b in rng.uniform(0.05, 1.0, size=(1000, 2)):
            inner = lf_gf(self.limit.ratio_params(float(b)), self.order)
            composed = lf_apply(self.limit.ratio_params(float(a)), inner)
            direct = lf_gf(self.limit.ratio_params(float(a * b)), self.order)
            worst = max(worst, float(np.abs(composed.coeffs - direct.coeffs).max()))
        self._add(report, exact_check('semigroup_identity', worst, self.tol.exact), started)

        started = time.perf_counter()
        s = np.linspace(0.0, 0.95, 20)
        self._add(report, exact_check('generator_a', self._rate_gap_a(s), self.tol.rates), started)
        return report

    def _rate_gap_a(self, s: np.ndarray) -> float:
        """Gap between a(s) and the time derivative of F(s, t) at t = 0."""
        h = FINITE_DIFFERENCE_STEP
        values = [lf_eval(self.limit.transition_params(k * h), s) for k in range(3)]
        slope = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
        return float(np.abs(slope - generator_a(self.limit, s)).max())

    def _rate_gap_b(self, s: np.ndarray) -> float:
        """Gap between b(s) and the time derivative of f_Y(s) / f_Y(F(s, t)) at t = 0."""
        h = FINITE_DIFFERENCE_STEP
        base = log_fY(self.limit, s)
        values = [np.exp(base - log_fY(self.limit, lf_eval(self.limit.transition_params(k * h), s)))
                  for k in range(3)]
        slope = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
        return float(np.abs(slope - generator_b(self.limit, s)).max())

    def run_theorem1_fdd(self) -> VerificationReport:
        """Conditioned X on the grid against the exact limit joint law, and the limit simulators."""
        report = self._report('fdd')
        times = tuple(self.config.grid.times)
        n = self.config.grid.n_mc
        mc = self.config.mc

        started = time.perf_counter()
        sampler = ConditionedSampler(self.engine, n, times)
        sizes = self._sizes(mc.replicates)
        batch = PathBatch.concat(self._run(partial(_conditioned_task, sampler, mc.seed, 'conditioned', sizes), sizes))
        exact = sampler.exact_marginals()
        joint = self.limit_joint_X(times)
        self._add(report, tv_check('fdd_joint', batch.joint().to_array(self.cap), joint, self.tol.mc,
                                   samples=batch.replicates, n=n, times=list(times)), started)
        for i, t in enumerate(times):
            started = time.perf_counter()
            limit = marginalize(joint, [i])
            empirical = batch.marginal(t).pmf_vector(self.cap)
            check = self._add(report, tv_check(f"fdd_marginal_t{t:g}", empirical, limit, self.tol.mc,
                                               samples=batch.replicates, n=n,
                                               finite_n_tv=total_variation(pooled(exact[t], self.cap), limit)),
                              started)
            report.tables.append(pmf_table(f"fdd_t{t:g}", self.cap, exact=exact[t], limit=limit,
                                           mc=empirical, radius=check.confidence_radius))

        self._entrance_simulation(report, joint, times)
        self._z_simulation(report)
        return report

    def _entrance_simulation(self, report: VerificationReport, joint: np.ndarray, times: Tuple[float, ...]) -> None:
        """U sampled by rejection against the marginals of the limit joint law."""
        eps = self.config.limit.eps
        inner = tuple(t for t in times if t <= 1.0)
        outer = tuple(t for t in times if t > 1.0)
        started = time.perf_counter()
        sizes = self._sizes(math.ceil(self.config.mc.replicates / eps))
        batch = PathBatch.concat(self._run(
            partial(_entrance_task, self.limit, eps, inner, outer, self.config.mc.seed, sizes), sizes))
        for i, t in enumerate(times):
            self._add(report, tv_check(f"entrance_simulation_t{t:g}", batch.marginal(t).pmf_vector(self.cap),
                                       marginalize(joint, [i]), self.tol.mc, samples=batch.replicates,
                                       proposals=sum(sizes)), started)
            started = time.perf_counter()

    def _z_simulation(self, report: VerificationReport) -> None:
        """Gillespie Z from one individual against h_{exp(-t)} at t = log 2."""
        t = math.log(2.0)
        started = time.perf_counter()
        sizes = self._sizes(self.config.limit.z_replicates)
        states = np.concatenate(self._run(partial(_z_task, self.limit, t, self.config.mc.seed, sizes), sizes))
        empirical = np.bincount(np.minimum(states, self.cap + 1), minlength=self.cap + 2) / states.size
        target = pooled(lf_gf(self.limit.transition_params(t), self.order), self.cap)
        check = self._add(report, tv_check('z_simulation', empirical, target, self.tol.simulator,
                                           samples=int(states.size), t=t), started)
        report.tables.append(pmf_table('z_simulation', self.cap, limit=target, mc=empirical,
                                       radius=check.confidence_radius))

    def run_theorem2(self) -> VerificationReport:
        """Y_{A(n)} against f_Y, the Y joint law on the grid, and stationarity of W."""
        self._require_immigration('theorem2')
        report = self._report('theorem2')
        f_Y = stationary_fY(self.limit, self.order)
        n_values = self.config.grid.n_values

        for n in n_values:
            started = time.perf_counter()
            generation = scaling_A(self.spec, n)
            marginal = self.engine.marginal_pmf_Y(generation)
            last = n == n_values[-1]
            self._add(report, tv_check(f"immigration_tv_n{n}", marginal.pmf_vector(), f_Y.pmf_vector(),
                                       self.tol.immigration if last else 1.0, tail_mass=marginal.tail_mass,
                                       n=n, generation=generation), started)
            if last:
                report.tables.append(pmf_table(f"immigration_n{n}", self.cap, exact=marginal.coeffs,
                                               limit=f_Y.coeffs))

        times = tuple(self.config.grid.times)
        n, mc = self.config.grid.n_mc, self.config.mc
        started = time.perf_counter()
        sizes = self._sizes(mc.replicates)
        batch = PathBatch.concat(self._run(
            partial(_immigration_task, self.spec, n, times, mc.seed, 'y', sizes), sizes))
        joint = self.limit_joint_Y(times)
        self._add(report, tv_check('immigration_joint', batch.joint().to_array(self.cap), joint, self.tol.mc,
                                   samples=batch.replicates, n=n, overflow=batch.overflow_count), started)
        for i, t in enumerate(times):
            started = time.perf_counter()
            empirical = batch.marginal(t).pmf_vector(self.cap)
            limit = marginalize(joint, [i])
            check = self._add(report, tv_check(f"immigration_marginal_t{t:g}", empirical, limit, self.tol.mc,
                                               samples=batch.replicates, n=n), started)
            report.tables.append(pmf_table(f"immigration_t{t:g}", self.cap, limit=limit, mc=empirical,
                                           radius=check.confidence_radius))

        started = time.perf_counter()
        s = np.linspace(0.0, 1.0, 51)
        target = evaluate(f_Y, s)
        worst = 0.0
        for t in self.config.limit.w_times:
            mixed = sum(f_Y.coeffs[y] * W_transition_gf(self.limit, y, s, t) for y in range(self.order + 1))
            worst = max(worst, float(np.abs(mixed - target).max()))
        self._add(report, exact_check('stationarity_residual', worst, self.tol.exact,
                                      tail_mass=f_Y.tail_mass, w_times=list(self.config.limit.w_times)), started)

        started = time.perf_counter()
        self._add(report, exact_check('generator_b', self._rate_gap_b(np.linspace(0.0, 0.95, 20)),
                                      self.tol.rates), started)

        self._w_simulation(report, f_Y)
        return report

    def _w_simulation(self, report: VerificationReport, f_Y: TruncatedSeries) -> None:
        """W started from f_Y stays at f_Y; event counts match the rates."""
        w_times = tuple(float(t) for t in self.config.limit.w_times)
        started = time.perf_counter()
        sizes = self._sizes(self.config.limit.z_replicates)
        results = self._run(partial(_w_task, self.limit, w_times, self.order, self.config.mc.seed, sizes), sizes)
        states = np.concatenate([r[0] for r in results], axis=0)
        immigration, births, deaths = np.sum([r[1] for r in results], axis=0)
        target = pooled(f_Y, self.cap)
        for i, t in enumerate(w_times):
            empirical = np.bincount(np.minimum(states[:, i], self.cap + 1), minlength=self.cap + 2) / states.shape[0]
            self._add(report, tv_check(f"w_stationary_t{t:g}", empirical, target, self.tol.immigration,
                                       samples=int(states.shape[0])), started)
            started = time.perf_counter()

        expected = self.limit.beta_rate * w_times[-1] * states.shape[0]
        z = abs(immigration - expected) / math.sqrt(expected)
        self._add(report, scalar_check('w_immigration_events', float(z), 0.0, self.tol.z_score,
                                       events=int(immigration), expected=expected), started)
        individual = int(births + deaths)
        share = self.limit.birth_rate / self.limit.alpha_rate
        spread = math.sqrt(max(individual * share * (1.0 - share), 1e-300))
        z = abs(births - individual * share) / spread if share > 0.0 else float(births)
        self._add(report, scalar_check('w_birth_share', float(z), 0.0, self.tol.z_score,
                                       births=int(births), individual_events=individual), started)

    def run_reverse(self) -> VerificationReport:
        """Marginals re-indexed by t -> 1/t against the forward limit laws."""
        if not self.config.inversion_closed:
            raise GridError(f"grid {self.config.grid.times} is not closed under t -> 1/t")
        report = self._report('reverse')
        times = tuple(self.config.grid.times)
        n, mc = self.config.grid.n_mc, self.config.mc

        started = time.perf_counter()
        sampler = ConditionedSampler(self.engine, n, times)
        sizes = self._sizes(mc.replicates)
        batch = PathBatch.concat(self._run(partial(_conditioned_task, sampler, mc.seed, 'reverse_x', sizes), sizes))
        self._reversed_checks(report, 'reverse_x', reverse_marginals(batch), self.limit_joint_X(times), started)

        started = time.perf_counter()
        pushed = quasi_stationary_pmf(self.limit, self.order).coeffs[:self.cap + 1] @ reversed_kernel(
            self.limit, 0.0, 0.5, self.cap, self.order)
        target = entrance_law(self.limit, 0.5, self.order).coeffs[:self.cap + 1]
        self._add(report, exact_check('reversed_kernel_push', float(np.abs(pushed - target).max()),
                                      self.tol.exact), started)

        if self.spec.has_immigration:
            started = time.perf_counter()
            batch = PathBatch.concat(self._run(
                partial(_immigration_task, self.spec, n, times, mc.seed, 'reverse_y', sizes), sizes))
            self._reversed_checks(report, 'reverse_y', reverse_marginals(batch), self.limit_joint_Y(times), started)
        return report

    def _reversed_checks(self, report: VerificationReport, prefix: str, reversed_batch: PathBatch,
                         forward_joint: np.ndarray, started: float) -> None:
        axes = tuple(range(forward_joint.ndim))[::-1]
        target = np.transpose(forward_joint, axes)
        samples = reversed_batch.replicates
        self._add(report, tv_check(f"{prefix}_joint", reversed_batch.joint().to_array(self.cap), target,
                                   self.tol.mc, samples=samples), started)
        for i, t in enumerate(reversed_batch.times):
            started = time.perf_counter()
            empirical = reversed_batch.marginal(t).pmf_vector(self.cap)
            limit = marginalize(target, [i])
            check = self._add(report, tv_check(f"{prefix}_t{t:g}", empirical, limit, self.tol.mc,
                                               samples=samples, forward_time=1.0 / t), started)
            report.tables.append(pmf_table(f"{prefix}_t{t:g}", self.cap, limit=limit, mc=empirical,
                                           radius=check.confidence_radius))

    def run_diagnostics(self) -> VerificationReport:
        """Numeric evidence for the environment conditions and the scaling sequence."""
        report = self._report('diag')
        horizon = self.config.grid.diagnostics_horizon

        started = time.perf_counter()
        diagnostics = condition_diagnostics(self.spec, horizon, self.order)
        for k, value in diagnostics.toeplitz_sums.items():
            target = diagnostics.toeplitz_targets[k]
            if target > 0.0:
                check = scalar_check(f"toeplitz_k{k}", value, target, self.tol.scaling, relative=True,
                                     horizon=horizon)
            else:
                check = exact_check(f"toeplitz_k{k}", abs(value), self.tol.identity, horizon=horizon)
            self._add(report, check, started)
            started = time.perf_counter()
        self._add(report, scalar_check('harmonic_sum', diagnostics.harmonic_sum, diagnostics.harmonic_reference,
                                       2.0, horizon=horizon), started)
        self._add(report, scalar_check('shape_sup_ratio', diagnostics.shape_sup_ratio, 0.0, self.tol.shape,
                                       horizon=horizon), started)

        n = self.config.grid.n_values[-1]
        points = sorted({self.config.limit.eps, *self.config.grid.times})
        started = time.perf_counter()
        worst = 0.0
        for u, t in zip(points, points[1:]):
            j, k = scaling_A(self.spec, math.floor(n * u)), scaling_A(self.spec, math.floor(n * t))
            worst = max(worst, abs(cumulative_mean(self.spec, j, k) - u / t))
        self._add(report, scalar_check('scaled_mean_ratio', worst, 0.0, self.tol.ratio, n=n, points=points), started)

        started = time.perf_counter()
        table = scaling_table(self.spec)
        violation = 0.0
        for m in self.config.grid.n_values:
            generation = scaling_A(self.spec, m)
            scaled = m * table.cumulative(generation)
            lower = table.min_mean(generation)
            violation = max(violation, max(0.0, lower - scaled, scaled - 1.0 - 1e-9))
        self._add(report, exact_check('scaling_sandwich', violation, self.tol.identity), started)

        started = time.perf_counter()
        self._add(report, scalar_check('asymptotic_scaling', scaling_A(self.spec, n),
                                       asymptotic_scaling(self.spec, n), self.tol.scaling, relative=True, n=n),
                  started)

        started = time.perf_counter()
        residual = self.engine.shape_identity_residual(0, 40, np.linspace(0.0, 0.9, 10))
        self._add(report, exact_check('shape_identity', residual, self.tol.exact, generations=[0, 40]), started)
        return report

    def run(self, experiment: str) -> List[VerificationReport]:
        """Run one named experiment, or every applicable one for ``'all'``."""
        handlers: Dict[str, Callable[[], VerificationReport]] = {
            'yaglom': self.run_yaglom,
            'fdd': self.run_theorem1_fdd,
            'entrance': self.run_entrance_law,
            'theorem2': self.run_theorem2,
            'reverse': self.run_reverse,
            'diag': self.run_diagnostics,
        }
        if experiment != 'all':
            if experiment not in handlers:
                raise ConfigurationError(f"unknown experiment '{experiment}'")
            return [handlers[experiment]()]
        reports = []
        for name in EXPERIMENTS:
            if name == 'theorem2' and not self.spec.has_immigration:
                logger.info("Skipping theorem2: scenario has no immigration")
                continue
            if name == 'reverse' and not self.config.inversion_closed:
                logger.info("Skipping reverse: grid is not closed under inversion")
                continue
            reports.append(handlers[name]())
        return reports


def run_yaglom(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_yaglom()


def run_theorem1_fdd(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_theorem1_fdd()


def run_entrance_law(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_entrance_law()


def run_theorem2(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_theorem2()


def run_reverse(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_reverse()


def run_diagnostics(config: ScenarioConfig) -> VerificationReport:
    return ExperimentRunner(config).run_diagnostics()
