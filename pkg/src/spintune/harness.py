"""Closed-loop run orchestration with persisted, resumable records.

A run wires one task backend to the optimizer: ask for candidates,
evaluate them (order-independent, reproducible shot seeds), tell the
ranked results back, and append one JSON line per generation to the
record file. Identical configs produce byte-identical record files;
wall-clock timings go to a separate sidecar so they never break that.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, backends, cmaes, rb

__all__ = [
    "ConfigError",
    "RunConfig",
    "GenerationRecord",
    "RunRecord",
    "BatchResult",
    "space_for_task",
    "run",
    "batch",
    "load_record",
    "export",
    "covariance_series",
    "evaluate_params",
]

log = logging.getLogger(__name__)

TASKS = ("readout", "shuttle", "single_qubit", "benchmark")

RECORD_NAME = "record.jsonl"
TIMINGS_NAME = "timings.jsonl"
AGGREGATE_NAME = "aggregate.json"

_INITIAL_MEAN = 0.5
_INITIAL_SIGMA = 0.25


class ConfigError(Exception):
    """Invalid run configuration or missing fixture."""


@dataclass(frozen=True)
class RunConfig:
    """One closed-loop optimization task."""

    task: str
    generations: int
    population: int
    seed: int = 0
    shots: int = 1000
    backend_fixture: object = None
    output_dir: object = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if self.population < 2:
            raise ConfigError("population must be >= 2")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")

    def to_dict(self) -> dict:
        fixture = self.backend_fixture
        if isinstance(fixture, Path):
            fixture = str(fixture)
        return {
            "task": self.task,
            "generations": self.generations,
            "population": self.population,
            "seed": self.seed,
            "shots": self.shots,
            "backend_fixture": fixture,
            "output_dir": str(self.output_dir) if self.output_dir is not None else None,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        try:
            return cls(
                task=payload["task"],
                generations=int(payload["generations"]),
                population=int(payload["population"]),
                seed=int(payload.get("seed", 0)),
                shots=int(payload.get("shots", 1000)),
                backend_fixture=payload.get("backend_fixture"),
                output_dir=payload.get("output_dir"),
            )
        except KeyError as missing:
            raise ConfigError(f"config is missing required key {missing}") from None

    @classmethod
    def from_json(cls, path: Path | str) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from None
        return cls.from_dict(payload)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    candidates: list
    state: dict
    best_cost: float
    best_params: list


@dataclass(frozen=True)
class RunRecord:
    config: RunConfig
    space: backends.ParameterSpace
    generations: list = field(default_factory=list)

    @property
    def best_cost(self) -> float:
        return self.generations[-1].best_cost

    @property
    def best_params(self) -> list:
        return self.generations[-1].best_params

    @property
    def evaluation_count(self) -> int:
        return sum(len(g.candidates) for g in self.generations)


@dataclass(frozen=True)
class BatchResult:
    records: list
    aggregate: dict


def space_for_task(task: str) -> backends.ParameterSpace:
    if task == "readout":
        return backends.readout_space()
    if task == "shuttle":
        return backends.shuttle_space()
    if task == "single_qubit":
        return backends.rb_space()
    if task == "benchmark":
        return backends.ParameterSpace(tuple(
            backends.SpaceEntry(f"x{i}", 0.0, 1.0, "1") for i in range(5)
        ))
    raise ConfigError(f"unknown task {task!r}")


_BENCHMARK_OPTIMUM = np.linspace(0.3, 0.7, 5)


def _load_landscape(config: RunConfig, make_default) -> backends.HiddenLandscape:
    fixture = config.backend_fixture
    if fixture is None:
        return make_default(config.seed)
    if isinstance(fixture, dict):
        try:
            return backends.HiddenLandscape.from_dict(fixture)
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"bad inline landscape fixture: {err}") from None
    try:
        return backends.HiddenLandscape.load(fixture)
    except FileNotFoundError:
        raise ConfigError(f"backend fixture not found: {fixture}") from None
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as err:
        raise ConfigError(f"bad landscape fixture {fixture}: {err}") from None


def _make_evaluator(config: RunConfig, space: backends.ParameterSpace):
    """Return evaluate(x_normalized, shot_seed) for the configured task."""
    if config.task == "readout":
        landscape = _load_landscape(config, backends.make_readout_landscape)
        return lambda x, s: backends.readout_backend_evaluate(
            landscape, space, x, config.shots, shot_seed=s)
    if config.task == "shuttle":
        landscape = _load_landscape(config, backends.make_shuttle_landscape)
        return lambda x, s: backends.shuttle_backend_evaluate(
            landscape, space, x, n_shots=config.shots, shot_seed=s)
    if config.task == "single_qubit":
        cfg = rb.RbConfig(shots_per_sequence=config.shots, seed=config.seed)
        return lambda x, s: rb.rb_backend_evaluate(cfg, space.denormalize(x), shot_seed=s)
    if config.task == "benchmark":
        def sphere(x, s):
            return backends.CostEvaluation(cost=float(np.sum((x - _BENCHMARK_OPTIMUM) ** 2)))
        return sphere
    raise ConfigError(f"unknown task {config.task!r}")


def _shot_seed(base_seed: int, generation: int, candidate_id: int) -> int:
    return int(np.random.SeedSequence((base_seed, generation, candidate_id)).generate_state(1)[0])


def _plain(value):
    """Make a metadata value JSON-serializable."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _state_to_dict(state: cmaes.DistributionState) -> dict:
    return {
        "mean": state.mean.tolist(),
        "sigma": state.sigma,
        "cov": state.cov.tolist(),
        "p_sigma": state.p_sigma.tolist(),
        "p_c": state.p_c.tolist(),
        "generation": state.generation,
    }


def _state_from_dict(payload: dict) -> cmaes.DistributionState:
    return cmaes.DistributionState(
        mean=np.array(payload["mean"], dtype=float),
        sigma=float(payload["sigma"]),
        cov=np.array(payload["cov"], dtype=float),
        p_sigma=np.array(payload["p_sigma"], dtype=float),
        p_c=np.array(payload["p_c"], dtype=float),
        generation=int(payload["generation"]),
    )


def _dump_line(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def run(config: RunConfig, resume: bool = False) -> RunRecord:
    """Execute the closed loop, appending one record line per generation.

    With ``resume`` and an existing record file, completed generations
    are kept and the loop continues from the stored optimizer state;
    counter-based sampling makes the continuation byte-identical to an
    uninterrupted run.
    """
    space = space_for_task(config.task)
    evaluate = _make_evaluator(config, space)
    params = cmaes.StrategyParams.defaults(
        dimension=space.dimension, population=config.population, seed=config.seed)
    state = cmaes.DistributionState.initial(
        np.full(space.dimension, _INITIAL_MEAN), sigma=_INITIAL_SIGMA)

    done: list[GenerationRecord] = []
    best_cost = np.inf
    best_params: list = []

    out_dir = Path(config.output_dir) if config.output_dir is not None else None
    record_file = None
    timing_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    if resume and out_dir is not None and (out_dir / RECORD_NAME).exists():
        prior = load_record(out_dir)
        done = list(prior.generations)
        if done:
            state = _state_from_dict(done[-1].state)
            best_cost = done[-1].best_cost
            best_params = list(done[-1].best_params)
        mode = "w" if not done else "a"
        if mode == "w":
            record_file = (out_dir / RECORD_NAME).open("w")
            _write_header(record_file, config, space)
        else:
            # rewrite cleanly up to the last complete generation, then append
            lines = [_dump_line(_header_payload(config, space))]
            lines += [_dump_line(_generation_payload(g)) for g in done]
            (out_dir / RECORD_NAME).write_text("\n".join(lines) + "\n")
            record_file = (out_dir / RECORD_NAME).open("a")
        timing_file = (out_dir / TIMINGS_NAME).open("a")
    elif out_dir is not None:
        record_file = (out_dir / RECORD_NAME).open("w")
        _write_header(record_file, config, space)
        timing_file = (out_dir / TIMINGS_NAME).open("w")

    try:
        for gen in range(len(done), config.generations):
            started = time.perf_counter()
            candidates = cmaes.ask(state, params)
            evaluated = []
            cand_rows = []
            for cand in candidates:
                seed = _shot_seed(config.seed, gen, cand.id)
                try:
                    result = evaluate(cand.x, seed)
                    cost = float(result.cost)
                    meta = _plain(result.metadata)
                except Exception as err:  # noqa: BLE001 - a bad candidate must not kill the run
                    log.warning("candidate %d of generation %d failed: %s", cand.id, gen, err)
                    cost = float("inf")
                    meta = {"error": str(err)}
                evaluated.append((cand, cost))
                cand_rows.append({
                    "id": cand.id,
                    "x": space.denormalize(cand.x).tolist(),
                    "cost": cost,
                    "meta": meta,
                })
                if cost < best_cost:
                    best_cost = cost
                    best_params = space.denormalize(cand.x).tolist()
            state = cmaes.tell(state, params, evaluated)
            rec = GenerationRecord(
                generation=gen,
                candidates=cand_rows,
                state=_state_to_dict(state),
                best_cost=float(best_cost),
                best_params=list(best_params),
            )
            done.append(rec)
            if record_file is not None:
                record_file.write(_dump_line(_generation_payload(rec)) + "\n")
                record_file.flush()
            if timing_file is not None:
                timing_file.write(_dump_line({
                    "generation": gen,
                    "seconds": time.perf_counter() - started,
                }) + "\n")
                timing_file.flush()
    finally:
        if record_file is not None:
            record_file.close()
        if timing_file is not None:
            timing_file.close()

    record = RunRecord(config=config, space=space, generations=done)
    log.info("run finished: best cost %.6g at %s", record.best_cost,
             dict(zip(space.names, record.best_params)))
    return record


def _header_payload(config: RunConfig, space: backends.ParameterSpace) -> dict:
    from . import __version__

    payload = config.to_dict()
    # The storage location does not define the run; keeping it out of the
    # header makes records from identical configs byte-comparable.
    payload.pop("output_dir", None)
    return {
        "type": "header",
        "config": payload,
        "space": space.to_dicts(),
        "version": __version__,
    }


def _write_header(handle, config: RunConfig, space: backends.ParameterSpace) -> None:
    handle.write(_dump_line(_header_payload(config, space)) + "\n")
    handle.flush()


def _generation_payload(rec: GenerationRecord) -> dict:
    return {
        "type": "generation",
        "generation": rec.generation,
        "candidates": rec.candidates,
        "state": rec.state,
        "best_cost": rec.best_cost,
        "best_params": rec.best_params,
    }


def load_record(record_dir: Path | str) -> RunRecord:
    """Load a persisted run, tolerating a truncated trailing line."""
    path = Path(record_dir) / RECORD_NAME
    if not path.exists():
        raise ConfigError(f"no {RECORD_NAME} in {record_dir}")
    header = None
    gens: list[GenerationRecord] = []
    with path.open() as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError:
                break  # crash-truncated tail; keep what is complete
            if payload.get("type") == "header":
                header = payload
            elif payload.get("type") == "generation":
                gens.append(GenerationRecord(
                    generation=int(payload["generation"]),
                    candidates=payload["candidates"],
                    state=payload["state"],
                    best_cost=float(payload["best_cost"]),
                    best_params=list(payload["best_params"]),
                ))
    if header is None:
        raise ConfigError(f"{path} has no header line")
    config = RunConfig.from_dict(header["config"])
    space = backends.ParameterSpace.from_dicts(header["space"])
    return RunRecord(config=config, space=space, generations=gens)


def _pin_backend_fixture(config: RunConfig) -> RunConfig:
    """Materialize the default landscape so every repeat sees the same device.

    A batch models repeated tune-ups of one physical sample, so the hidden
    landscape must stay fixed while the optimizer seed and shot noise vary.
    Without this, each derived seed would plant a different optimum.
    """
    if config.backend_fixture is not None:
        return config
    if config.task == "readout":
        landscape = backends.make_readout_landscape(config.seed)
    elif config.task == "shuttle":
        landscape = backends.make_shuttle_landscape(config.seed)
    else:
        return config
    return replace(config, backend_fixture=landscape.to_dict())


def batch(config: RunConfig, repeats: int) -> BatchResult:
    """Repeat the run with derived seeds; failures do not abort the batch."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    config = _pin_backend_fixture(config)
    base_out = Path(config.output_dir) if config.output_dir is not None else None
    records: list = []
    rows = []
    for r in range(repeats):
        # repeat 0 is the base run itself, so a batch of one is just run()
        if r == 0:
            derived = config.seed
        else:
            derived = int(np.random.SeedSequence((config.seed, r)).generate_state(1)[0])
        sub_out = str(base_out / f"run_{r:03d}") if base_out is not None else None
        sub = replace(config, seed=derived, output_dir=sub_out)
        try:
            record = run(sub)
        except Exception as err:  # noqa: BLE001 - isolate per-repeat failures
            log.warning("repeat %d failed: %s", r, err)
            records.append(None)
            rows.append({"repeat": r, "seed": derived, "error": str(err)})
            continue
        records.append(record)
        rows.append({
            "repeat": r,
            "seed": derived,
            "best_cost": record.best_cost,
            "best_params": record.best_params,
        })
    best_costs = [row["best_cost"] for row in rows if "best_cost" in row]
    aggregate = {
        "task": config.task,
        "base_seed": config.seed,
        "repeats": repeats,
        "runs": rows,
        "best_costs": best_costs,
        "band_width": (max(best_costs) - min(best_costs)) if best_costs else None,
    }
    if base_out is not None:
        base_out.mkdir(parents=True, exist_ok=True)
        (base_out / AGGREGATE_NAME).write_text(
            json.dumps(aggregate, sort_keys=True, indent=2) + "\n")
    return BatchResult(records=records, aggregate=aggregate)


def covariance_series(record: RunRecord) -> analysis.CovarianceSeries:
    """Distribution covariance before each generation plus the final one.

    Generation 0 is the untouched initial state, so its matrix is the
    identity; entry g > 0 is the state after telling generation g - 1.
    """
    n = record.space.dimension
    mats = [np.eye(n)]
    gens = [0]
    for rec in record.generations:
        mats.append(np.array(rec.state["cov"], dtype=float))
        gens.append(rec.generation + 1)
    return analysis.CovarianceSeries(generations=tuple(gens), matrices=np.array(mats))


def evaluate_params(config: RunConfig, physical_values, shot_seed: int = 0) -> backends.CostEvaluation:
    """Evaluate one physical-unit parameter vector under a run's backend."""
    space = space_for_task(config.task)
    evaluate = _make_evaluator(config, space)
    x = space.normalize(np.asarray(physical_values, dtype=float))
    return evaluate(np.clip(x, 0.0, 1.0), shot_seed)


def export(record: RunRecord, what: str, out_path: Path | str) -> Path:
    """Write one analysis-ready view of a run record.

    trace: CSV of every evaluation; covariance: JSON time series of the
    distribution covariance; best_params: JSON of the best candidate in
    physical units. Grids come from the sweep command, which writes CSV
    directly, so requesting one here is an error.
    """
    out_path = Path(out_path)
    if what == "trace":
        lines = ["generation,individual,cost"]
        for rec in record.generations:
            for cand in rec.candidates:
                lines.append(f"{rec.generation},{cand['id']},{cand['cost']!r}")
        out_path.write_text("\n".join(lines) + "\n")
    elif what == "covariance":
        series = covariance_series(record)
        payload = {
            "generations": list(series.generations),
            "matrices": series.matrices.tolist(),
        }
        out_path.write_text(json.dumps(payload, sort_keys=True) + "\n")
    elif what == "best_params":
        payload = {
            "task": record.config.task,
            "names": list(record.space.names),
            "values": record.best_params,
            "cost": record.best_cost,
        }
        out_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        raise ValueError(
            f"unknown export {what!r}; expected trace, covariance or best_params "
            "(grids are written by the sweep command)")
    return out_path
