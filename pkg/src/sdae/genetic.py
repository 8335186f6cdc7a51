"""Conventional (CGA) and gradient-hybrid (HGA) genetic training of one tied layer.

Individuals are flat genomes in ``flatten_params`` order. Mutation and crossover draw
their random numbers from a counter-based hash keyed by (seed, epoch, example, pair,
slot, operator) and the element index, so chunking the genome over any number of threads
gives identical results. Roulette selection uses an ordinary sequential generator.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from numba import njit, prange

from sdae.dataset import ConfigError, CorruptionSpec, epoch_rng, epoch_stream
from sdae.linalg import DimensionError, set_threads
from sdae.network import DenseTiedLayer, GradientWorkspace, decode, encode, genome_length, squared_loss, tied_gradient_step
from sdae.sgd import RunRecord, as_matrix

log = logging.getLogger(__name__)

_MASK64 = 0xFFFFFFFFFFFFFFFF
_SELECT_STREAM = 0x524F554C
_OP_MUTATE = 1
_OP_CROSS = 2


@dataclass
class Individual:
    genome: np.ndarray
    fitness: float = math.nan
    scaled_fitness: float = math.nan


JSON_KEYS = ("population", "mutation_rate", "mutation_amount", "crossover_rate", "replacement_fraction",
             "power_gamma", "backprop_fraction", "learning_rate", "epochs", "corruption_prob", "seed", "threads")


@dataclass
class GaConfig:
    population: int = 2
    mutation_rate: float = 1e-4
    mutation_amount: float = 0.1
    crossover_rate: float = 0.5
    replacement_fraction: float = 0.5
    power_gamma: float = 1.0
    init_range: float = 1.0
    backprop_fraction: float = 0.5
    learning_rate: float = 0.01
    epochs: int = 15
    corruption_prob: float = 0.25
    seed: int = 0
    threads: int | None = None
    shuffle: bool = True
    # >1 averages the loss over the current and preceding examples of the epoch
    fitness_window: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError(f"population must be >= 2, got {self.population}")
        for name in ("mutation_rate", "crossover_rate", "corruption_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("replacement_fraction", "backprop_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.mutation_amount < 0 or self.init_range <= 0 or self.power_gamma < 0:
            raise ConfigError("mutation_amount, init_range and power_gamma must be non-negative (init_range > 0)")
        if self.epochs < 1 or self.fitness_window < 1:
            raise ConfigError("epochs and fitness_window must be >= 1")

    @property
    def corruption(self) -> CorruptionSpec:
        return CorruptionSpec(self.corruption_prob)

    @property
    def offspring_count(self) -> int:
        # at most N-1 so the best individual always survives
        return min(math.ceil(self.replacement_fraction * self.population), self.population - 1)

    @property
    def backprop_count(self) -> int:
        return math.ceil(self.backprop_fraction * self.population)

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: d[k] for k in JSON_KEYS}, indent=2)


def default_ga_config(m: int, **overrides) -> GaConfig:
    """Defaults for an ``m``-input layer: r = 1/sqrt(m), ma = 0.1 r, N = 2, cr = alpha = beta = 0.5."""
    if m < 1:
        raise ValueError(f"input dimension must be >= 1, got {m}")
    r = 1.0 / math.sqrt(m)
    cfg = dict(population=2, mutation_rate=1e-4, mutation_amount=0.1 * r, crossover_rate=0.5,
               replacement_fraction=0.5, power_gamma=1.0, init_range=r, backprop_fraction=0.5)
    cfg.update(overrides)
    return GaConfig(**cfg)


def ga_config_from_json(text: str, m: int, **overrides) -> GaConfig:
    """Parse a flat JSON config; absent keys fall back to :func:`default_ga_config`."""
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("GA config must be a JSON object")
    unknown = set(raw) - set(JSON_KEYS)
    if unknown:
        raise ConfigError(f"unknown GA config keys: {sorted(unknown)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(GaConfig)}
    return default_ga_config(m, **{k: v for k, v in raw.items() if k in names})


def load_ga_config(path, m: int, **overrides) -> GaConfig:
    return ga_config_from_json(Path(path).read_text(), m, **overrides)


# counter-based randomness ---------------------------------------------------------------

def _splitmix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(*parts: int) -> int:
    """Fold integers into one 64-bit stream key."""
    h = 0x6A09E667F3BCC909
    for p in parts:
        h = _splitmix(h ^ (int(p) & _MASK64))
    return h


@njit(inline="always")
def _uniform(key, counter):
    z = key + (counter + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    # 53 random bits, shifted off zero: strictly inside (0, 1)
    return (np.float64(z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(parallel=True, cache=True)
def _mutation_sites(mr, key, out):
    for i in prange(out.size):
        out[i] = _uniform(key, np.uint64(2) * np.uint64(i)) < mr


@njit(cache=True)
def _apply_cauchy(g, sites, ma, key):
    # kept out of the site scan: a transcendental call there stops the scan vectorizing
    for i in sites:
        u = _uniform(key, np.uint64(2) * np.uint64(i) + np.uint64(1))
        g[i] += ma * math.tan(math.pi * (u - 0.5))


@njit(parallel=True, cache=True)
def _crossover_kernel(a, b, cr, key):
    for i in prange(a.size):
        if _uniform(key, np.uint64(i)) < cr:
            t = a[i]
            a[i] = b[i]
            b[i] = t


@njit(cache=True)
def _uniforms(key, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = _uniform(key, np.uint64(i))
    return out


def counter_uniforms(key: int, n: int) -> np.ndarray:
    """The first ``n`` uniforms of stream ``key`` (the same numbers the operators consume)."""
    return _uniforms(np.uint64(key), n)


# operators --------------------------------------------------------------------------------

def cauchy_mutate(genome: np.ndarray, mr: float, ma: float, key: int, threads: int | None = None) -> None:
    """Per element, with probability ``mr``, add Cauchy noise of scale ``ma`` (in place)."""
    set_threads(threads)
    hit = np.empty(genome.size, dtype=np.bool_)
    _mutation_sites(float(mr), np.uint64(key), hit)
    _apply_cauchy(genome, np.flatnonzero(hit), float(ma), np.uint64(key))


def uniform_crossover(a: np.ndarray, b: np.ndarray, cr: float, key: int, threads: int | None = None) -> None:
    """Per element, with probability ``cr``, swap ``a[i]`` and ``b[i]`` (in place)."""
    if a.shape != b.shape:
        raise DimensionError(f"crossover of genomes with shapes {a.shape} and {b.shape}")
    set_threads(threads)
    _crossover_kernel(a, b, float(cr), np.uint64(key))


def power_scale(population: list[Individual], gamma: float) -> None:
    """Scaled fitness = rank**gamma, rank 1 for the least fit; ties keep population order."""
    fit = np.array([ind.fitness for ind in population])
    if np.isnan(fit).any():
        raise ValueError("power_scale on an unevaluated individual")
    ranks = np.empty(len(fit))
    ranks[np.argsort(fit, kind="stable")] = np.arange(1, len(fit) + 1)
    for ind, r in zip(population, ranks):
        ind.scaled_fitness = float(r**gamma)


def roulette_select(population: list[Individual], rng: np.random.Generator) -> int:
    """Index drawn with probability proportional to scaled fitness."""
    w = np.cumsum([ind.scaled_fitness for ind in population])
    if not w[-1] > 0:
        raise ValueError("roulette selection needs a positive total scaled fitness")
    return int(np.searchsorted(w, rng.random() * w[-1], side="right"))


def evaluate(ind: Individual, m: int, n: int, x_corr: np.ndarray, t: np.ndarray,
             threads: int | None = None) -> float:
    """fitness = 1 / reconstruction loss; the genome is only read."""
    layer = DenseTiedLayer.view_of(ind.genome, m, n)
    z = decode(layer, encode(layer, x_corr, threads), threads)
    ind.fitness = 1.0 / squared_loss(t, z)
    return ind.fitness


# drivers ------------------------------------------------------------------------------------

def init_population(m: int, n: int, cfg: GaConfig) -> list[Individual]:
    rng = np.random.default_rng(cfg.seed)
    size = genome_length(m, n)
    return [Individual(rng.uniform(-cfg.init_range, cfg.init_range, size)) for _ in range(cfg.population)]


def _run_ga(layer_template: DenseTiedLayer, data, cfg: GaConfig, hybrid: bool,
            population: list[np.ndarray] | None) -> tuple[DenseTiedLayer, RunRecord]:
    m, n = layer_template.input_count, layer_template.hidden_count
    X = as_matrix(data)
    if X.ndim != 2 or X.shape[1] != m:
        raise DimensionError(f"data of shape {X.shape} for a layer with {m} inputs")
    if population is None:
        pop = init_population(m, n, cfg)
    else:
        if len(population) != cfg.population:
            raise ConfigError(f"{len(population)} initial genomes for population {cfg.population}")
        pop = [Individual(np.array(g, dtype=np.float64)) for g in population]
        for ind in pop:
            if ind.genome.shape != (genome_length(m, n),):
                raise DimensionError("initial genome does not fit the layer template")

    select_rng = epoch_rng(cfg.seed, 0, _SELECT_STREAM)
    ws = GradientWorkspace.for_layer(layer_template)
    n_off, n_bp = cfg.offspring_count, cfg.backprop_count
    rec = RunRecord()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        total = 0.0
        window: list[tuple[np.ndarray, np.ndarray]] = []
        for pos, _, x_corr, x in epoch_stream(X, cfg.corruption, cfg.seed, epoch, cfg.shuffle):
            if cfg.fitness_window > 1:
                window = (window + [(x_corr, x)])[-cfg.fitness_window:]
                for ind in pop:
                    losses = [1.0 / evaluate(ind, m, n, xc, xt, cfg.threads) for xc, xt in window]
                    ind.fitness = 1.0 / float(np.mean(losses))
            else:
                for ind in pop:
                    evaluate(ind, m, n, x_corr, x, cfg.threads)
            power_scale(pop, cfg.power_gamma)
            order = np.argsort([ind.fitness for ind in pop], kind="stable")
            total += 1.0 / pop[order[-1]].fitness

            if hybrid:
                for i in order[::-1][:n_bp]:
                    layer = DenseTiedLayer.view_of(pop[i].genome, m, n)
                    tied_gradient_step(layer, x_corr, x, cfg.learning_rate, threads=cfg.threads, ws=ws)

            offspring = []
            pair = 0
            while len(offspring) < n_off:
                a = pop[roulette_select(pop, select_rng)].genome.copy()
                b = pop[roulette_select(pop, select_rng)].genome.copy()
                cauchy_mutate(a, cfg.mutation_rate, cfg.mutation_amount,
                              stream_key(cfg.seed, epoch, pos, pair, 0, _OP_MUTATE), cfg.threads)
                cauchy_mutate(b, cfg.mutation_rate, cfg.mutation_amount,
                              stream_key(cfg.seed, epoch, pos, pair, 1, _OP_MUTATE), cfg.threads)
                uniform_crossover(a, b, cfg.crossover_rate, stream_key(cfg.seed, epoch, pos, pair, 0, _OP_CROSS),
                                  cfg.threads)
                offspring += [a, b]
                pair += 1
            for slot, child in zip(order[:n_off], offspring[:n_off]):
                pop[slot] = Individual(child)
        rec.append(epoch + 1, time.perf_counter() - start, total)
        log.info("%s epoch %d error %.6g", "hga" if hybrid else "cga", epoch + 1, total)

    # newly inserted offspring carry no fitness yet; the survivor set holds the last measured best
    best = max((ind for ind in pop if not math.isnan(ind.fitness)), key=lambda ind: ind.fitness)
    return DenseTiedLayer.view_of(best.genome.copy(), m, n), rec


def run_cga(layer_template: DenseTiedLayer, data, cfg: GaConfig,
            population: list[np.ndarray] | None = None) -> tuple[DenseTiedLayer, RunRecord]:
    """Evaluate, power-scale, roulette-select pairs, mutate and cross the copies, replace the worst.

    The epoch error is the summed loss of the best individual on each example.
    """
    return _run_ga(layer_template, data, cfg, hybrid=False, population=population)


def run_hga(layer_template: DenseTiedLayer, data, cfg: GaConfig,
            population: list[np.ndarray] | None = None) -> tuple[DenseTiedLayer, RunRecord]:
    """As :func:`run_cga`, plus one backpropagation step on the top ``ceil(beta*N)`` individuals
    after scaling and before selection."""
    return _run_ga(layer_template, data, cfg, hybrid=True, population=population)


__all__ = [
    "GaConfig", "Individual", "JSON_KEYS", "cauchy_mutate", "counter_uniforms", "default_ga_config", "evaluate",
    "ga_config_from_json", "init_population", "load_ga_config", "power_scale", "roulette_select", "run_cga",
    "run_hga", "stream_key", "uniform_crossover",
]
