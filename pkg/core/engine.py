"""
Scenario runners.

Each scenario reads the run configuration, performs its experiment and writes
artifacts through one ArtifactWriter. Grid scenarios evaluate their points on a
bounded thread pool; every point owns its random substreams and rows are written
in grid order regardless of completion order.
"""
import dataclasses
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from common.constants import (
    CSV_COLUMNS,
    DATASET_FILE,
    DESIGN_FILE,
    EXACT_SHOTS,
    LOGGER_NAME,
    REPORT_FILE,
    VALIDATION_FILE,
    Color,
    DistanceKind,
    ModelKind,
    Scenario,
    SuccessMessage,
)
from common.errors import ConfigError
from core.estimation import (
    EstimationReport,
    FitConfig,
    build_validation_set,
    cost,
    cross_entropy_surplus,
    fit,
    gauge_align,
    gauge_error,
    noise_floor,
)
from core.fisher import (
    DesignResult,
    as_pulses,
    crb_report,
    design_pulses,
    fisher_total,
    log_det_information,
    normalise_power,
)
from core.hardware import (
    Dataset,
    SpamModel,
    TrueSystem,
    device_basis,
    build_true_system,
    generate_dataset,
    measure_pulses,
    random_pulses,
    ring_pairs,
)
from core.lsq import lsq_experiment
from core.models import ModelSpec
from data.artifacts import ArtifactWriter
from data.dataset_io import dataset_to_dict, load_dataset, load_pulses, load_report_omega, pulses_to_dict

logger = logging.getLogger(f"{LOGGER_NAME}.engine")


def power_law_slope(x, y) -> Optional[float]:
    """Least-squares slope of log y against log x over the positive finite pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if np.unique(x[keep]).size < 2:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def long_pulse_gain(rows: Sequence[dict], short: float, long: float) -> Dict[str, Optional[float]]:
    """V_min at the shortest duration over V_min at the longest, per SPAM level."""
    gains = {}
    for s in dict.fromkeys(r["s"] for r in rows):
        by_T = {r["T"]: r["V_min"] for r in rows if r["s"] == s}
        gains[f"s={s:g}"] = by_T[short] / by_T[long] if by_T[long] > 0 else None
    return gains


@dataclass
class RunResult:
    scenario: Scenario
    out_dir: str
    rows: Optional[List[Dict]]
    summary: Dict
    artifacts: Dict[str, str]
    wall_time: float


class Engine:
    """Runs one scenario of the configured experiment.

    Attributes:
        config: Run configuration (config.settings.Config)
        writer: Artifact writer for the output directory, created by run()
        executor: Thread pool of the grid currently being evaluated
    """

    def __init__(self, config):
        self.config = config
        self.writer: Optional[ArtifactWriter] = None
        self.executor: Optional[ThreadPoolExecutor] = None
        self._validation_sets: Dict[str, Dataset] = {}
        self._validation_lock = threading.Lock()
        self._runners: Dict[Scenario, Callable[[], Tuple[Optional[List[Dict]], Dict]]] = {
            Scenario.GENERATE: self._run_generate,
            Scenario.FIT: self._run_fit,
            Scenario.VALIDATE: self._run_validate,
            Scenario.DESIGN: self._run_design,
            Scenario.SCAN_PS: self._run_scan_ps,
            Scenario.SCAN_SPAM: self._run_scan_spam,
            Scenario.LINDBLAD_COMPARE: self._run_lindblad_compare,
            Scenario.DESIGN_COMPARE: self._run_design_compare,
            Scenario.LSQ_DEMO: self._run_lsq_demo,
            Scenario.DISTANCE_COMPARE: self._run_distance_compare,
            Scenario.INCOMPLETE_COMPARE: self._run_incomplete_compare,
            Scenario.CRB_CHECK: self._run_crb_check,
        }

    def run(self) -> RunResult:
        started = time.perf_counter()
        scenario = self.config.scenario
        self.writer = ArtifactWriter(self.config.out_dir)
        logger.info(f"Scenario {scenario.value}: output in {self.config.out_dir}, {self.config.threads} threads")
        self._say(f"[*] Running {scenario.value} ({self.config.threads} threads)...", Color.CYAN)

        rows, summary = self._runners[scenario]()
        if rows is not None:
            self.writer.write_csv(f"{scenario.value}.csv", CSV_COLUMNS[scenario], rows)

        wall_time = time.perf_counter() - started
        self.writer.write_manifest(scenario.value, self.config.seeds, self.config.to_dict(), summary, wall_time)
        logger.info(SuccessMessage.SCENARIO_COMPLETE.format(scenario=scenario.value, seconds=wall_time))
        return RunResult(scenario, self.config.out_dir, rows, summary, dict(self.writer.written), wall_time)

    # -------------------------------------------------------------------------
    # Shared pieces
    # -------------------------------------------------------------------------
    def _say(self, message: str, color: str = "") -> None:
        if not self.config.quiet:
            print(f"{color}{message}{Color.RESET if color else ''}", flush=True)

    def _system(self, **overrides) -> TrueSystem:
        s = self.config.system
        params = {"qubits": s.qubits, "seed": s.seed, "decay": s.decay, "undriven_coupling": s.undriven_coupling}
        params.update(overrides)
        return build_true_system(**params)

    def _spam(self, system: TrueSystem, s: Optional[float] = None) -> SpamModel:
        return SpamModel(self.config.data.spam if s is None else s, system.qubits)

    def _model(self, system: TrueSystem, lindblad: Optional[bool] = None) -> ModelSpec:
        m = self.config.model
        if m.kind is ModelKind.GENERAL:
            hamiltonian = ModelSpec.general(system.dim, system.n_drives)
        else:
            hamiltonian = system.hamiltonian_spec(drift=m.drift)
        if lindblad is None:
            lindblad = m.lindblad or m.kind is ModelKind.LINDBLAD
        if lindblad:
            return ModelSpec.lindblad(hamiltonian, system.collapse_ops, m.integrator, m.steps)
        return hamiltonian

    def _validation_set(self, system: TrueSystem) -> Dataset:
        """Validation data per true system, built once and shared by all grid points."""
        with self._validation_lock:
            cached = self._validation_sets.get(system.tag)
        if cached is not None:
            return cached
        v = self.config.validation
        built = build_validation_set(system, v.pulses, v.duration, v.seed)
        with self._validation_lock:
            return self._validation_sets.setdefault(system.tag, built)

    def _configured_dataset(self, system: TrueSystem) -> Dataset:
        """Dataset of the `data` section: measured designed pulses or fresh random pulses."""
        d = self.config.data
        spam = self._spam(system)
        if d.pulse_file:
            pulses, duration = load_pulses(d.pulse_file)
            if pulses.shape[1] != system.n_drives:
                raise ConfigError(f"Pulse file {d.pulse_file} has {pulses.shape[1]} drives; "
                                  f"the system needs {system.n_drives}")
            return measure_pulses(system, spam, pulses, d.shots, duration, d.seed, self.config.threads,
                                  meta={"pulse_file": d.pulse_file})
        return generate_dataset(system, spam, d.pulses, d.shots, d.duration, d.seed, self.config.threads)

    def _fit(self, dataset: Dataset, model: ModelSpec, system: TrueSystem,
             fit_config: Optional[FitConfig] = None, threads: int = 1) -> EstimationReport:
        return fit(dataset, model, fit_config or self.config.fit, system=system, threads=threads,
                   validation_set=self._validation_set(system))

    def _load_omega(self, model: ModelSpec) -> NDArray:
        path = self.config.data.report
        omega, labels = load_report_omega(path)
        if labels != model.labels():
            raise ConfigError(f"Report {path} was fitted with a different model "
                              f"({len(labels)} parameters, expected {model.n_params})")
        return omega

    def _run_grid(self, points: Sequence, evaluate: Callable) -> List:
        """Evaluate points on the worker pool; results come back in grid order."""
        total = len(points)
        results: List = [None] * total
        with ThreadPoolExecutor(max_workers=max(1, min(self.config.threads, total))) as executor:
            self.executor = executor
            futures = {executor.submit(evaluate, point): i for i, point in enumerate(points)}
            try:
                for done, future in enumerate(as_completed(futures), 1):
                    results[futures[future]] = future.result()
                    self._say(f"    > {done}/{total} grid points", Color.GRAY)
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
            finally:
                self.executor = None
        return results

    @staticmethod
    def _validation_of(report: EstimationReport) -> float:
        return report.diagnostics.get("validation", float("nan"))

    # -------------------------------------------------------------------------
    # Single-run scenarios
    # -------------------------------------------------------------------------
    def _run_generate(self):
        system = self._system()
        dataset = self._configured_dataset(system)
        self.writer.write_json(DATASET_FILE, dataset_to_dict(dataset))
        summary = {"P": dataset.size, "S": dataset.shots, "T": dataset.duration,
                   "s": self.config.data.spam, "system": system.describe()}
        return None, summary

    def _run_fit(self):
        cfg = self.config
        system = self._system()
        if cfg.data.dataset:
            dataset = load_dataset(cfg.data.dataset)
            if dataset.meta.get("system") != system.tag:
                logger.warning(f"Dataset was generated by {dataset.meta.get('system')}, "
                               f"validating against {system.tag}")
        else:
            dataset = self._configured_dataset(system)
            self.writer.write_json(DATASET_FILE, dataset_to_dict(dataset))

        model = self._model(system)
        report = self._fit(dataset, model, system, threads=cfg.threads)
        payload = report.to_dict()
        payload["truth"] = system.describe()
        payload["dataset"] = dict(dataset.meta)
        self.writer.write_json(REPORT_FILE, payload)
        summary = {"C_min": report.final_cost, "V_min": self._validation_of(report), "epochs": report.epochs,
                   "stop_reason": report.stop_reason}
        if "gauge_residual" in report.diagnostics:
            summary["gauge_residual"] = report.diagnostics["gauge_residual"]
        return None, summary

    def _run_validate(self):
        cfg = self.config
        if not cfg.data.report:
            raise ConfigError("Scenario validate needs data.report (a fit_report.json)")
        system = self._system()
        model = self._model(system)
        omega = self._load_omega(model)
        validation_set = self._validation_set(system)

        with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            per_distance = {kind.value: cost(omega, validation_set, model, kind, executor=executor)
                            for kind in DistanceKind}
            surplus = cross_entropy_surplus(omega, validation_set, model, executor=executor)

        result = {
            "report": cfg.data.report,
            "V": per_distance[DistanceKind.MSE.value],
            "per_distance": per_distance,
            "cross_entropy_surplus": surplus,
            "validation": dataclasses.asdict(cfg.validation),
            "system": system.tag,
        }
        if model.hamiltonian_spec.kind is ModelKind.LINEAR_MIX:
            result["gauge_error"] = gauge_error(omega, system.omega_true(model), model)
        self.writer.write_json(VALIDATION_FILE, result)
        return None, {key: result[key] for key in ("V", "cross_entropy_surplus") if key in result}

    def _design_omega(self, system: TrueSystem, model: ModelSpec) -> Tuple[NDArray, str]:
        """Parameters the design is optimised at: a fitted report, or the truth."""
        if self.config.data.report:
            return self._load_omega(model), "report"
        if model.hamiltonian_spec.kind is not ModelKind.LINEAR_MIX:
            raise ConfigError("Designing at the true parameters needs a linear_mix model; "
                              "set data.report to design at a fitted general model")
        return system.omega_true(model), "truth"

    def _design(self, system: TrueSystem, model: ModelSpec, P: int) -> Tuple[DesignResult, NDArray]:
        cfg = self.config
        omega, source = self._design_omega(system, model)
        with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            result = design_pulses(omega, model, P, cfg.data.duration, power=cfg.design.power,
                                   steps=cfg.design.steps, lr=cfg.design.lr, seed=cfg.data.seed,
                                   executor=executor)
        meta = {"seed": cfg.data.seed, "source": source, "power": cfg.design.power, "steps": cfg.design.steps,
                "log_det_trace": result.log_det_trace, "system": system.tag}
        self.writer.write_json(DESIGN_FILE, pulses_to_dict(result.pulses, result.duration, meta))
        return result, omega

    def _run_design(self):
        system = self._system()
        model = self._model(system)
        result, _ = self._design(system, model, self.config.data.pulses)
        summary = {"P": int(result.pulses.shape[0]), "initial_log_det": result.initial_log_det,
                   "final_log_det": result.final_log_det}
        return None, summary

    # -------------------------------------------------------------------------
    # Grid scenarios
    # -------------------------------------------------------------------------
    def _run_scan_ps(self):
        cfg = self.config
        system = self._system()
        spam = self._spam(system)
        model = self._model(system)
        points = [(P, S) for P in cfg.grid.pulses for S in cfg.grid.shots]

        def evaluate(point):
            P, S = point
            dataset = generate_dataset(system, spam, P, S, cfg.data.duration, cfg.data.seed)
            report = self._fit(dataset, model, system)
            predictions = [model.predict(report.omega_hat, dataset.pulse(i)) for i in range(P)]
            return {"P": P, "S": S, "C_min": report.final_cost, "V_min": self._validation_of(report),
                    "floor": noise_floor(cfg.fit.distance, predictions, S), "epochs": report.epochs}

        rows = self._run_grid(points, evaluate)
        sampled = [r for r in rows if r["S"] != EXACT_SHOTS]
        largest = max(cfg.grid.pulses)
        at_largest = [r for r in sampled if r["P"] == largest]
        summary = {
            "slope_V_vs_PS": power_law_slope([r["P"] * r["S"] for r in sampled], [r["V_min"] for r in sampled]),
            "slope_C_vs_S_at_max_P": power_law_slope([r["S"] for r in at_largest], [r["C_min"] for r in at_largest]),
        }
        exact = [r["V_min"] for r in rows if r["S"] == EXACT_SHOTS]
        if exact:
            summary["max_V_exact"] = max(exact)
        return rows, summary

    def _run_scan_spam(self):
        cfg = self.config
        system = self._system()
        model = self._model(system)
        P, S = cfg.grid.pulses[0], cfg.grid.shots[0]
        points = [(s, T) for s in cfg.grid.spam for T in cfg.grid.durations]

        def evaluate(point):
            s, T = point
            dataset = generate_dataset(system, self._spam(system, s), P, S, T, cfg.data.seed)
            report = self._fit(dataset, model, system)
            return {"s": s, "T": T, "P": P, "S": S, "C_min": report.final_cost, "V_min": self._validation_of(report)}

        rows = self._run_grid(points, evaluate)
        slopes = {}
        for T in cfg.grid.durations:
            subset = [r for r in rows if r["T"] == T]
            slopes[f"T={T:g}"] = power_law_slope([r["s"] for r in subset], [r["V_min"] for r in subset])
        summary = {"slope_V_vs_s": slopes}
        if len(cfg.grid.durations) >= 2:
            summary["long_pulse_gain"] = long_pulse_gain(rows, min(cfg.grid.durations), max(cfg.grid.durations))
        return rows, summary

    def _run_lindblad_compare(self):
        cfg = self.config
        P, S = cfg.grid.pulses[0], cfg.grid.shots[0]

        def evaluate(gamma):
            system = self._system(decay=gamma)
            dataset = generate_dataset(system, self._spam(system), P, S, cfg.data.duration, cfg.data.seed)
            out = []
            for kind, lindblad in (("hamiltonian", False), ("lindblad", True)):
                report = self._fit(dataset, self._model(system, lindblad=lindblad), system)
                out.append({"gamma": gamma, "model_kind": kind, "C_min": report.final_cost,
                            "V_min": self._validation_of(report)})
            return out

        rows = [row for pair in self._run_grid(list(cfg.grid.decay), evaluate) for row in pair]
        hamiltonian = [r for r in rows if r["model_kind"] == "hamiltonian"]
        lindblad_v = [r["V_min"] for r in rows if r["model_kind"] == "lindblad"]
        summary = {
            "slope_hamiltonian_V_vs_gamma": power_law_slope([r["gamma"] for r in hamiltonian],
                                                           [r["V_min"] for r in hamiltonian]),
            "lindblad_V_ratio": max(lindblad_v) / min(lindblad_v) if min(lindblad_v) > 0 else None,
        }
        return rows, summary

    def _run_design_compare(self):
        cfg = self.config
        system = self._system()
        spam = self._spam(system)
        model = self._model(system, lindblad=False)
        design, omega = self._design(system, model, cfg.grid.pulses[0])
        # the random baseline is measured at the designed power
        baseline = normalise_power(design.initial_pulses, cfg.design.power)
        baseline_log_det = log_det_information(omega, model, baseline, cfg.data.duration)
        pulse_sets = {"random": (baseline, baseline_log_det),
                      "designed": (design.pulses, design.final_log_det)}
        points = [(S, kind) for S in cfg.grid.shots for kind in pulse_sets]

        def evaluate(point):
            S, kind = point
            pulses, log_det = pulse_sets[kind]
            dataset = measure_pulses(system, spam, pulses, S, cfg.data.duration, cfg.data.seed)
            report = self._fit(dataset, model, system)
            return {"S": S, "pulse_kind": kind, "log_det": log_det, "C_min": report.final_cost,
                    "V_min": self._validation_of(report)}

        rows = self._run_grid(points, evaluate)
        factors = {}
        for S in cfg.grid.shots:
            by_kind = {r["pulse_kind"]: r["V_min"] for r in rows if r["S"] == S}
            factors[str(S)] = by_kind["random"] / by_kind["designed"] if by_kind["designed"] > 0 else None
        finite = [f for f in factors.values() if f is not None]
        summary = {"improvement_factor": factors,
                   "median_improvement": float(np.median(finite)) if finite else None,
                   "initial_log_det": baseline_log_det, "final_log_det": design.final_log_det}
        return rows, summary

    def _run_lsq_demo(self):
        grid = self.config.grid
        points = [(P, S) for P in grid.pulses for S in grid.shots]

        def evaluate(point):
            P, S = point
            return lsq_experiment(P, S, grid.p, grid.trials, self.config.data.seed).to_row()

        rows = self._run_grid(points, evaluate)
        budget = [r["P"] * r["S"] for r in rows]
        summary = {
            "slope_v_opt_vs_PS": power_law_slope(budget, [r["mean_v_opt"] for r in rows]),
            "slope_v_full_vs_PS": power_law_slope(budget, [r["mean_v_full"] for r in rows]),
            "max_v_opt_relative_error": max(abs(r["mean_v_opt"] / r["predicted"] - 1.0) for r in rows
                                            if r["predicted"] > 0) if grid.p > 0 else None,
        }
        return rows, summary

    def _run_distance_compare(self):
        cfg = self.config
        system = self._system()
        model = self._model(system)
        dataset = self._configured_dataset(system)
        validation_set = self._validation_set(system)

        def evaluate(kind: DistanceKind):
            report = self._fit(dataset, model, system, dataclasses.replace(cfg.fit, distance=kind))
            omega = report.omega_hat
            return {
                "distance": kind.value,
                "C_min": report.final_cost,
                "V_mse": cost(omega, validation_set, model, DistanceKind.MSE),
                "V_bhattacharyya": cost(omega, validation_set, model, DistanceKind.BHATTACHARYYA),
                "V_cross_entropy_surplus": cross_entropy_surplus(omega, validation_set, model),
            }

        rows = self._run_grid(list(cfg.grid.distances), evaluate)
        best = min(rows, key=lambda r: r["V_mse"])
        return rows, {"best_by_V_mse": best["distance"]}

    def _run_incomplete_compare(self):
        cfg = self.config
        P, S = cfg.data.pulses, cfg.data.shots
        pair = ring_pairs(cfg.system.qubits)[0]
        dropped = f"{pair[0] + 1}{pair[1] + 1}"

        def evaluate(coupling):
            system = self._system(undriven_coupling=coupling)
            dataset = generate_dataset(system, self._spam(system), P, S, cfg.data.duration, cfg.data.seed)
            models = {
                "complete": system.hamiltonian_spec(),
                "incomplete": ModelSpec.linear_mix(device_basis(system.qubits, exclude=(dropped,)),
                                                   system.n_drives),
            }
            out = []
            for kind, model in models.items():
                report = self._fit(dataset, model, system)
                out.append({"omega_coupling": coupling, "model_kind": kind, "C_min": report.final_cost,
                            "V_min": self._validation_of(report)})
            return out

        rows = [row for pair_rows in self._run_grid(list(cfg.grid.coupling), evaluate) for row in pair_rows]
        incomplete = [r for r in rows if r["model_kind"] == "incomplete"]
        summary = {"dropped_operator": dropped,
                   "slope_incomplete_V_vs_omega": power_law_slope([r["omega_coupling"] for r in incomplete],
                                                                  [r["V_min"] for r in incomplete])}
        return rows, summary

    def _run_crb_check(self):
        """Monte-Carlo spread of repeated fits on fixed pulses against the Fisher bound."""
        cfg = self.config
        if cfg.data.shots == EXACT_SHOTS:
            raise ConfigError("crb_check needs finite shots (data.shots >= 1)")
        system = self._system()
        model = system.hamiltonian_spec()
        omega_true = system.omega_true(model)
        spam = self._spam(system)
        pulses = random_pulses(cfg.data.pulses, system.n_drives, cfg.data.seed)
        labels = model.labels()

        with ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            information = fisher_total(omega_true, model, as_pulses(pulses, cfg.data.duration), cfg.data.shots,
                                       executor)
        bound = crb_report(information)

        def evaluate(trial: int) -> NDArray:
            dataset = measure_pulses(system, spam, pulses, cfg.data.shots, cfg.data.duration,
                                     cfg.data.seed + 1 + trial)
            report = fit(dataset, model, cfg.fit, omega0=omega_true)
            return gauge_align(report.omega_hat, omega_true, model)

        estimates = np.array(self._run_grid(list(range(cfg.grid.fits)), evaluate))
        variance = np.var(estimates, axis=0, ddof=1)
        rows = []
        for label, b, v in zip(labels, bound.bounds, variance):
            finite = bool(np.isfinite(b)) and b > 0
            rows.append({"parameter": label, "bound": b, "variance": v, "ratio": v / b if finite else None})

        ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
        summary = {
            "fits": cfg.grid.fits,
            "crb": bound.to_dict(labels),
            "min_ratio": min(ratios) if ratios else None,
            "median_ratio": float(np.median(ratios)) if ratios else None,
            "within_factor_3": all(r >= 1.0 / 3.0 for r in ratios),
        }
        return rows, summary
