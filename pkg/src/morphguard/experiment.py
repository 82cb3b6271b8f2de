"""Experiment driver: dataset bundles, training regimes, evaluation.

This module owns the JSON experiment config and the end-to-end recipes
the CLI exposes (data generation, margin sweeps, two-stage adaptation,
evaluation, feature analysis). Every recipe is a pure function of
(config, seed, input artifacts); all numbers in emitted reports are
produced by the library modules, never recomputed here.

Evaluation protocol: the last ``holdout_fraction`` of each identity's
bona fide samples (in generation order) are excluded from training.
Genuine and impostor verification pairs are seeded draws from that
held-out pool; each protocol morph is rebuilt from its training-pool
parents and scored against one held-out sample of each parent identity.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import datagen, featviz, metrics
from .datagen import _unit
from .encoder import DualHeadModel, TrainConfig, _forward_batch, adapt, init_model, train
from .errors import ConfigError, DataError
from .losses import MarginConfig
from .metrics import MorphTrial, OperatingPoint, VerificationSet
from .seeding import STREAM_GENUINE, STREAM_IMPOSTOR, STREAM_TRIALS, rng_for

# Margin grid of the sweep experiments, positive to negative offsets.
DEFAULT_MARGIN_GRID = (0.1, 0.05, 0.0, -0.05, -0.1, -0.2, -0.3)


@dataclass(frozen=True)
class DataSettings:
    num_classes: int = 40
    samples_per_class: int = 50
    input_dim: int = 64
    spread: float = 0.15
    ratios: tuple = (2, 1, 1)
    holdout_fraction: float = 0.2
    alpha: float = 0.5

    def __post_init__(self):
        if len(self.ratios) != 3 or self.ratios[0] <= 0:
            raise ConfigError(
                f"ratios must be (bona fide, morph, selfmorph) with bona fide > 0, got {self.ratios}"
            )
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ConfigError(f"holdout_fraction must lie in (0, 1), got {self.holdout_fraction}")


@dataclass(frozen=True)
class ModelSettings:
    hidden_dims: tuple = (64,)
    embedding_dim: int = 32


@dataclass(frozen=True)
class TrainSettings:
    """From-scratch regime for sweep/train runs.

    The rates are scaled to the small MLP backbone: schedules around
    1e-3 (appropriate for large convolutional backbones) leave it far
    from convergence, and scale 16 with this schedule stays clear of
    the degenerate attractor that the angle clamp admits at scale 64.
    """

    epochs: int = 15
    lr_start: float = 3e-2
    lr_end: float = 1e-4
    batch_size: int = 128

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got ({self.epochs}, {self.batch_size})")
        if not (self.lr_start >= self.lr_end > 0):
            raise ConfigError(
                f"learning rates must satisfy lr_start >= lr_end > 0, got ({self.lr_start}, {self.lr_end})"
            )


@dataclass(frozen=True)
class MarginSettings:
    scale: float = 16.0
    bona_fide_margin: float = 0.5
    morph_offset: float = 0.0

    def __post_init__(self):
        MarginConfig(self.scale, self.bona_fide_margin, self.morph_offset)


@dataclass(frozen=True)
class EvalSettings:
    fnmr_targets: tuple = (0.01, 0.001)
    fmr_targets: tuple = (0.001, 0.0001)
    genuine_pairs: int = 2000
    impostor_pairs: int = 2000


@dataclass(frozen=True)
class AdaptSettings:
    """The two-stage regime: bona-fide pretraining, then morph adaptation.

    Epoch counts, the zero/negative margin offsets, and the one-decade
    drop from the stage-1 to the stage-2 learning rate follow the
    two-stage recipe; the absolute rates are rescaled for the MLP
    backbone like TrainSettings.
    """

    stage1_epochs: int = 15
    stage1_lr_start: float = 3e-2
    stage1_lr_end: float = 1e-4
    stage2_epochs: int = 10
    stage2_lr_start: float = 3e-3
    stage2_lr_end: float = 1e-4
    stage2_morph_offset: float = -0.1

    def __post_init__(self):
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ConfigError("stage epoch counts must be >= 1")
        for start, end in ((self.stage1_lr_start, self.stage1_lr_end), (self.stage2_lr_start, self.stage2_lr_end)):
            if not (start >= end > 0):
                raise ConfigError(f"stage learning rates must satisfy start >= end > 0, got ({start}, {end})")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    margin: MarginSettings = field(default_factory=MarginSettings)
    sweep_grid: tuple = DEFAULT_MARGIN_GRID
    eval: EvalSettings = field(default_factory=EvalSettings)
    adapt: AdaptSettings = field(default_factory=AdaptSettings)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            return cls(
                seed=int(raw.get("seed", 1)),
                data=DataSettings(**_tupled(raw.get("data", {}), "ratios")),
                model=ModelSettings(**_tupled(raw.get("model", {}), "hidden_dims")),
                train=TrainSettings(**raw.get("train", {})),
                margin=MarginSettings(**raw.get("margin", {})),
                sweep_grid=tuple(raw.get("sweep_grid", DEFAULT_MARGIN_GRID)),
                eval=EvalSettings(**_tupled(raw.get("eval", {}), "fnmr_targets", "fmr_targets")),
                adapt=AdaptSettings(**raw.get("adapt", {})),
            )
        except TypeError as exc:
            raise ConfigError(f"unknown or missing config field: {exc}") from exc


def _tupled(section: dict, *keys) -> dict:
    out = dict(section)
    for key in keys:
        if key in out:
            out[key] = tuple(out[key])
    return out


# --- data bundle ------------------------------------------------------------


@dataclass
class DataBundle:
    """Everything one experiment run derives from (config, seed).

    File-driven evaluation reconstructs a bundle without the universe
    (the protocol already carries the subset orientation).
    """

    universe: datagen.IdentityUniverse | None
    bona_fides: list  # full canonical pool, identity-major
    train_bona: list  # per identity: the first (1 - holdout_fraction) samples
    holdout: list  # per identity: the remaining samples
    protocol: datagen.MorphPairProtocol
    train_set: list


def holdout_split(bona_fides, samples_per_class: int, fraction: float):
    """Deterministic per-identity split: last samples are held out."""
    num_hold = max(1, int(round(samples_per_class * fraction)))
    if num_hold >= samples_per_class:
        raise ConfigError(
            f"holdout fraction {fraction} leaves no training samples "
            f"({num_hold} of {samples_per_class} held out)"
        )
    num_train = samples_per_class - num_hold
    grouped = datagen.group_by_identity(bona_fides)
    train, hold = [], []
    for identity in sorted(grouped):
        train.extend(grouped[identity][:num_train])
        hold.extend(grouped[identity][num_train:])
    return train, hold


def morph_budget(num_train_bona: int, ratios) -> int:
    """Number of protocol morphs the training-set ratios will consume."""
    return int(round(num_train_bona * float(ratios[1]) / float(ratios[0])))


def generate_bundle(config: ExperimentConfig) -> DataBundle:
    data = config.data
    universe, bona_fides = datagen.synth_identities(
        data.num_classes, data.samples_per_class, data.input_dim, data.spread, config.seed
    )
    train_bona, holdout = holdout_split(bona_fides, data.samples_per_class, data.holdout_fraction)
    protocol = datagen.pair_protocol(
        universe, train_bona, morph_budget(len(train_bona), data.ratios), config.seed
    )
    train_set = datagen.build_training_set(
        universe, train_bona, protocol, ratios=data.ratios, seed=config.seed, alpha=data.alpha
    )
    return DataBundle(universe, bona_fides, train_bona, holdout, protocol, train_set)


def fresh_model(config: ExperimentConfig) -> DualHeadModel:
    return init_model(
        config.data.input_dim,
        list(config.model.hidden_dims),
        config.model.embedding_dim,
        config.data.num_classes,
        config.seed,
    )


def train_config(config: ExperimentConfig, morph_offset=None, epochs=None, lr_start=None, lr_end=None) -> TrainConfig:
    margin = MarginConfig(
        scale=config.margin.scale,
        bona_fide_margin=config.margin.bona_fide_margin,
        morph_offset=config.margin.morph_offset if morph_offset is None else morph_offset,
    )
    return TrainConfig(
        epochs=config.train.epochs if epochs is None else epochs,
        lr_start=config.train.lr_start if lr_start is None else lr_start,
        lr_end=config.train.lr_end if lr_end is None else lr_end,
        batch_size=config.train.batch_size,
        seed=config.seed,
        margin=margin,
    )


# --- evaluation -------------------------------------------------------------


def _embed(model: DualHeadModel, samples) -> np.ndarray:
    inputs = np.stack([s.input for s in samples])
    embeddings, _ = _forward_batch(model, inputs)
    return embeddings


def verification_scores(model: DualHeadModel, holdout, settings: EvalSettings, seed: int) -> VerificationSet:
    """Seeded genuine/impostor cosine scores over held-out samples."""
    grouped = datagen.group_by_identity(holdout)
    identities = sorted(grouped)
    if any(len(grouped[i]) < 2 for i in identities) or len(identities) < 2:
        raise ConfigError("verification needs >= 2 held-out samples for >= 2 identities")
    embeddings = {i: _embed(model, grouped[i]) for i in identities}

    rng = rng_for(seed, STREAM_GENUINE)
    genuine = np.empty(settings.genuine_pairs)
    for k in range(settings.genuine_pairs):
        identity = identities[int(rng.integers(len(identities)))]
        i, j = rng.choice(len(grouped[identity]), size=2, replace=False)
        genuine[k] = np.clip(embeddings[identity][i] @ embeddings[identity][j], -1.0, 1.0)

    rng = rng_for(seed, STREAM_IMPOSTOR)
    impostor = np.empty(settings.impostor_pairs)
    for k in range(settings.impostor_pairs):
        a, b = rng.choice(len(identities), size=2, replace=False)
        ia, ib = identities[int(a)], identities[int(b)]
        impostor[k] = np.clip(
            embeddings[ia][int(rng.integers(len(grouped[ia])))]
            @ embeddings[ib][int(rng.integers(len(grouped[ib])))],
            -1.0,
            1.0,
        )
    return VerificationSet(genuine, impostor)


def build_trial_triplets(train_bona, protocol, alpha: float):
    """(parent_a, parent_b, morph) input triplets for each protocol pair.

    The blend reproduces the training-set morph construction exactly;
    protocol pairs are already oriented subset-1 first.
    """
    grouped = datagen.group_by_identity(train_bona)
    triplets = []
    for pair in protocol.pairs:
        try:
            parent_a = grouped[pair.identity_a][pair.sample_a]
            parent_b = grouped[pair.identity_b][pair.sample_b]
        except (KeyError, IndexError) as exc:
            raise DataError(f"protocol pair {pair} refers outside the bona fide pool") from exc
        morph = _unit(alpha * parent_a.input + (1.0 - alpha) * parent_b.input)
        triplets.append((parent_a.input, parent_b.input, morph))
    return triplets


def morph_trials(model: DualHeadModel, train_bona, holdout, protocol, seed: int, alpha: float):
    """Score each protocol morph against one held-out sample per parent."""
    grouped_hold = datagen.group_by_identity(holdout)
    triplets = build_trial_triplets(train_bona, protocol, alpha)
    morph_emb = _embed_vectors(model, [t[2] for t in triplets])
    hold_emb = {i: _embed(model, grouped_hold[i]) for i in grouped_hold}

    rng = rng_for(seed, STREAM_TRIALS)
    trials = []
    for idx, pair in enumerate(protocol.pairs):
        probe_a = hold_emb[pair.identity_a][int(rng.integers(len(grouped_hold[pair.identity_a])))]
        probe_b = hold_emb[pair.identity_b][int(rng.integers(len(grouped_hold[pair.identity_b])))]
        scores = np.clip([morph_emb[idx] @ probe_a, morph_emb[idx] @ probe_b], -1.0, 1.0)
        trials.append(MorphTrial(idx, scores))
    return trials


def _embed_vectors(model: DualHeadModel, vectors) -> np.ndarray:
    embeddings, _ = _forward_batch(model, np.stack(vectors))
    return embeddings


@dataclass
class EvalReport:
    """All metric artifacts of one model on one bundle."""

    verification: VerificationSet
    trials: list
    fnmr_curve: metrics.ThresholdCurve
    fmr_curve: metrics.ThresholdCurve
    mmpmr_curve: metrics.ThresholdCurve
    operating_points: list
    min_rmmr_threshold: float
    min_rmmr_value: float
    aligned_cloud: np.ndarray
    ellipse: featviz.Ellipse
    spread_size: float

    def point(self, metric: str, target: float | None = None) -> OperatingPoint:
        for p in self.operating_points:
            if p.metric == metric and (target is None or p.target == target):
                return p
        raise KeyError(f"no operating point {metric} @ {target}")


def evaluate_model(model: DualHeadModel, bundle: DataBundle, config: ExperimentConfig) -> EvalReport:
    verification = verification_scores(model, bundle.holdout, config.eval, config.seed)
    trials = morph_trials(
        model,
        bundle.train_bona,
        bundle.holdout,
        bundle.protocol,
        config.seed,
        config.data.alpha,
    )
    fnmr_curve, fmr_curve = metrics.fnmr_fmr_curves(verification)
    match_curve = metrics.mmpmr_curve(trials, fnmr_curve.thresholds)
    tau, value = metrics.min_rmmr(trials, verification)
    points = metrics.mmpmr_at_fnmr(trials, verification, config.eval.fnmr_targets)
    points += metrics.fnmr_at_fmr(verification, config.eval.fmr_targets)
    points.append(OperatingPoint("min_rmmr", None, None, tau, value))

    triplets = build_trial_triplets(bundle.train_bona, bundle.protocol, config.data.alpha)
    cloud, ellipse, size = featviz.morph_spread(triplets, model)
    points.append(OperatingPoint("morph_spread", None, None, None, size))
    return EvalReport(
        verification=verification,
        trials=trials,
        fnmr_curve=fnmr_curve,
        fmr_curve=fmr_curve,
        mmpmr_curve=match_curve,
        operating_points=points,
        min_rmmr_threshold=tau,
        min_rmmr_value=value,
        aligned_cloud=cloud,
        ellipse=ellipse,
        spread_size=size,
    )


# --- recipes ----------------------------------------------------------------


def evaluate_from_files(model: DualHeadModel, bona_fides, protocol, config: ExperimentConfig) -> EvalReport:
    """Evaluate a checkpoint against a saved bona fide pool and protocol.

    The train/holdout split is re-derived from the config exactly as in
    generate_bundle, so file-driven evaluation matches in-process runs.
    """
    train_bona, holdout = holdout_split(
        bona_fides, config.data.samples_per_class, config.data.holdout_fraction
    )
    bundle = DataBundle(None, bona_fides, train_bona, holdout, protocol, [])
    return evaluate_model(model, bundle, config)


def feature_analysis(model: DualHeadModel, bona_fides, protocol, config: ExperimentConfig):
    """Aligned per-role points plus the morph-cloud ellipse for reports."""
    train_bona, _ = holdout_split(
        bona_fides, config.data.samples_per_class, config.data.holdout_fraction
    )
    input_triplets = build_trial_triplets(train_bona, protocol, config.data.alpha)
    flat = np.stack([np.asarray(v) for t in input_triplets for v in t])
    embeddings, _ = _forward_batch(model, flat)
    feature_triplets = [
        featviz.Triplet(embeddings[3 * i], embeddings[3 * i + 1], embeddings[3 * i + 2])
        for i in range(len(input_triplets))
    ]
    aligned = featviz.align_feature_triplets(feature_triplets)
    ellipse = featviz.confidence_ellipse(aligned[:, 2, :], level=0.9)
    return aligned, ellipse, ellipse.size


def run_margin_entry(config: ExperimentConfig, morph_offset: float):
    """Train a fresh model at one sweep offset and evaluate it."""
    bundle = generate_bundle(config)
    model = fresh_model(config)
    model, history = train(model, bundle.train_set, train_config(config, morph_offset=morph_offset))
    report = evaluate_model(model, bundle, config)
    return model, history, report


def _sweep_worker(raw_config: dict, morph_offset: float):
    config = ExperimentConfig.from_dict(raw_config)
    _, history, report = run_margin_entry(config, morph_offset)
    return morph_offset, history, report


def run_sweep(config: ExperimentConfig, parallel: bool = False):
    """One (history, report) per grid offset, in grid order."""
    if len(config.sweep_grid) == 0:
        raise ConfigError("sweep needs a nonempty margin grid")
    if parallel and len(config.sweep_grid) > 1:
        raw = config.to_dict()
        with ProcessPoolExecutor(max_workers=min(len(config.sweep_grid), 4)) as pool:
            results = list(pool.map(_sweep_worker, [raw] * len(config.sweep_grid), config.sweep_grid))
        return results
    return [_sweep_worker(config.to_dict(), offset) for offset in config.sweep_grid]


def run_adaptation(config: ExperimentConfig, pretrained: DualHeadModel | None = None):
    """The two-stage regime; returns ((stage1 model, history, report),
    (stage2 model, history, report)) on the shared bundle.

    Stage 1 trains on bona fide data only with no morph offset; stage 2
    continues from it on the morph-augmented set with the adaptation
    offset and learning rates.
    """
    bundle = generate_bundle(config)
    settings = config.adapt

    if pretrained is None:
        stage1_set = datagen.build_training_set(
            bundle.universe, bundle.train_bona, bundle.protocol, ratios=(1, 0, 0), seed=config.seed
        )
        stage1_model = fresh_model(config)
        stage1_model, stage1_history = train(
            stage1_model,
            stage1_set,
            train_config(
                config,
                morph_offset=0.0,
                epochs=settings.stage1_epochs,
                lr_start=settings.stage1_lr_start,
                lr_end=settings.stage1_lr_end,
            ),
        )
    else:
        stage1_model, stage1_history = pretrained, None
    stage1_report = evaluate_model(stage1_model, bundle, config)

    stage2_model = stage1_model.copy()
    stage2_model, stage2_history = adapt(
        stage2_model,
        bundle.train_set,
        train_config(
            config,
            morph_offset=settings.stage2_morph_offset,
            epochs=settings.stage2_epochs,
            lr_start=settings.stage2_lr_start,
            lr_end=settings.stage2_lr_end,
        ),
    )
    stage2_report = evaluate_model(stage2_model, bundle, config)
    return (stage1_model, stage1_history, stage1_report), (stage2_model, stage2_history, stage2_report)
